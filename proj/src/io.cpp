#include "aoseg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace aoseg {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + path.string());
  return f;
}

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n, const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (f.gcount() != static_cast<std::streamsize>(n))
    throw Error(std::string("truncated file while reading ") + what);
}

void write_u32(std::ofstream& f, std::uint32_t v) { write_bytes(f, &v, 4); }
void write_f32(std::ofstream& f, float v) { write_bytes(f, &v, 4); }

std::uint32_t read_u32(std::ifstream& f, const char* what) {
  std::uint32_t v;
  read_bytes(f, &v, 4, what);
  return v;
}

float read_f32(std::ifstream& f, const char* what) {
  float v;
  read_bytes(f, &v, 4, what);
  return v;
}

void write_magic(std::ofstream& f, const char magic[5]) { write_bytes(f, magic, 4); }

void expect_magic(std::ifstream& f, const char magic[5], const std::filesystem::path& path) {
  char got[4];
  read_bytes(f, got, 4, "magic");
  if (std::memcmp(got, magic, 4) != 0)
    throw Error("bad magic in " + path.string() + " (expected " + magic + ")");
}

void expect_version(std::uint32_t v, const std::filesystem::path& path) {
  if (v != kFormatVersion)
    throw Error("unsupported format version " + std::to_string(v) + " in " + path.string());
}

}  // namespace

void save_sequence(const ImageSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  std::ofstream f = open_out(path);
  write_magic(f, "AOSQ");
  write_u32(f, kFormatVersion);
  write_u32(f, static_cast<std::uint32_t>(seq.frames));
  write_u32(f, static_cast<std::uint32_t>(seq.height));
  write_u32(f, static_cast<std::uint32_t>(seq.width));
  write_f32(f, seq.spacing_y);
  write_f32(f, seq.spacing_x);
  write_bytes(f, seq.data.data(), seq.data.size() * sizeof(float));
  if (!f) throw Error("write failed: " + path.string());
}

ImageSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream f = open_in(path);
  expect_magic(f, "AOSQ", path);
  expect_version(read_u32(f, "version"), path);
  ImageSequence seq;
  seq.frames = static_cast<int>(read_u32(f, "frames"));
  seq.height = static_cast<int>(read_u32(f, "height"));
  seq.width = static_cast<int>(read_u32(f, "width"));
  seq.spacing_y = read_f32(f, "spacing_y");
  seq.spacing_x = read_f32(f, "spacing_x");
  if (seq.frames <= 0 || seq.height <= 0 || seq.width <= 0)
    throw Error("invalid dimensions in " + path.string());
  seq.data.resize(static_cast<std::size_t>(seq.frames) * seq.frame_size());
  read_bytes(f, seq.data.data(), seq.data.size() * sizeof(float), "pixel data");
  return seq;
}

void save_labels(const LabelSequence& labels, const std::filesystem::path& path) {
  labels.validate();
  std::ofstream f = open_out(path);
  write_magic(f, "AOLB");
  write_u32(f, kFormatVersion);
  write_u32(f, static_cast<std::uint32_t>(labels.frames));
  write_u32(f, static_cast<std::uint32_t>(labels.height));
  write_u32(f, static_cast<std::uint32_t>(labels.width));
  const std::uint8_t nc = labels.num_classes;
  write_bytes(f, &nc, 1);
  write_bytes(f, labels.provenance.data(), labels.provenance.size());
  write_bytes(f, labels.data.data(), labels.data.size());
  if (!f) throw Error("write failed: " + path.string());
}

LabelSequence load_labels(const std::filesystem::path& path) {
  std::ifstream f = open_in(path);
  expect_magic(f, "AOLB", path);
  expect_version(read_u32(f, "version"), path);
  LabelSequence labels;
  labels.frames = static_cast<int>(read_u32(f, "frames"));
  labels.height = static_cast<int>(read_u32(f, "height"));
  labels.width = static_cast<int>(read_u32(f, "width"));
  if (labels.frames <= 0 || labels.height <= 0 || labels.width <= 0)
    throw Error("invalid dimensions in " + path.string());
  read_bytes(f, &labels.num_classes, 1, "num_classes");
  labels.provenance.resize(labels.frames);
  read_bytes(f, labels.provenance.data(), labels.provenance.size(), "provenance");
  labels.data.resize(static_cast<std::size_t>(labels.frames) * labels.frame_size());
  read_bytes(f, labels.data.data(), labels.data.size(), "label data");
  for (std::uint8_t v : labels.data)
    if (v >= labels.num_classes)
      throw Error("label class out of range in " + path.string());
  return labels;
}

void save_field(const DisplacementField& field, const std::filesystem::path& path) {
  std::ofstream f = open_out(path);
  write_magic(f, "AODF");
  write_u32(f, static_cast<std::uint32_t>(field.height));
  write_u32(f, static_cast<std::uint32_t>(field.width));
  write_bytes(f, field.d.data(), field.d.size() * sizeof(float));
  if (!f) throw Error("write failed: " + path.string());
}

DisplacementField load_field(const std::filesystem::path& path) {
  std::ifstream f = open_in(path);
  expect_magic(f, "AODF", path);
  const int h = static_cast<int>(read_u32(f, "height"));
  const int w = static_cast<int>(read_u32(f, "width"));
  if (h <= 0 || w <= 0) throw Error("invalid dimensions in " + path.string());
  DisplacementField field(h, w);
  read_bytes(f, field.d.data(), field.d.size() * sizeof(float), "field data");
  return field;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["kind"] = ckpt.kind;
  manifest["config"] = ckpt.config;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& nt : ckpt.tensors)
    tensors.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  manifest["tensors"] = tensors;
  const std::string header = manifest.dump();

  std::ofstream f = open_out(path);
  write_magic(f, "AOCK");
  write_u32(f, kFormatVersion);
  write_u32(f, static_cast<std::uint32_t>(header.size()));
  write_bytes(f, header.data(), header.size());
  for (const auto& nt : ckpt.tensors)
    write_bytes(f, nt.tensor.data(), static_cast<std::size_t>(nt.tensor.size()) * 4);
  if (!f) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f = open_in(path);
  expect_magic(f, "AOCK", path);
  expect_version(read_u32(f, "version"), path);
  const std::uint32_t header_len = read_u32(f, "header length");
  std::string header(header_len, '\0');
  read_bytes(f, header.data(), header_len, "manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid checkpoint manifest in " + path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.kind = manifest.at("kind").get<std::string>();
  ckpt.config = manifest.at("config");
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    Tensor<float> t(shape);
    read_bytes(f, t.data(), static_cast<std::size_t>(t.size()) * 4,
               ("tensor " + name).c_str());
    ckpt.tensors.push_back({name, t});
  }
  // must be exactly at EOF: manifest shapes account for every payload byte
  char extra;
  f.read(&extra, 1);
  if (!f.eof())
    throw Error("checkpoint " + path.string() + " has payload beyond the manifest");
  return ckpt;
}

void restore_named_tensors(const Checkpoint& ckpt, std::vector<NamedTensor<float>> params) {
  if (ckpt.tensors.size() != params.size())
    throw Error("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.tensors[i];
    auto& dst = params[i];
    if (src.name != dst.name)
      throw Error("checkpoint tensor '" + src.name + "' does not match model tensor '" +
                  dst.name + "'");
    if (src.tensor.shape() != dst.tensor.shape())
      throw Error("checkpoint shape " + shape_str(src.tensor.shape()) + " for '" +
                  src.name + "' does not match model shape " +
                  shape_str(dst.tensor.shape()));
    dst.tensor.values() = src.tensor.values();
  }
}

}  // namespace aoseg

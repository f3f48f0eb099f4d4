// Binary file formats, all little-endian and bit-exact:
//
//   AOSQ  image sequence: u32 version, u32 T,H,W, f32 spacing_y, f32
//         spacing_x, then T*H*W f32.
//   AOLB  label sequence: u32 version, u32 T,H,W, u8 num_classes, T bytes
//         provenance (1=human, 0=propagated), then T*H*W u8 class indices.
//   AOCK  checkpoint: u32 version, u32 header length, UTF-8 JSON manifest
//         {format_version, kind, config, tensors:[{name, shape}]}, then the
//         f32 payloads concatenated in manifest order.
//   AODF  displacement field: u32 H, W, then H*W*2 f32 (dy, dx per pixel).

#pragma once

#include <filesystem>
#include <json.hpp>

#include "aoseg/adam.hpp"
#include "aoseg/registration.hpp"
#include "aoseg/sequence.hpp"

namespace aoseg {

void save_sequence(const ImageSequence& seq, const std::filesystem::path& path);
ImageSequence load_sequence(const std::filesystem::path& path);

void save_labels(const LabelSequence& labels, const std::filesystem::path& path);
LabelSequence load_labels(const std::filesystem::path& path);

void save_field(const DisplacementField& field, const std::filesystem::path& path);
DisplacementField load_field(const std::filesystem::path& path);

// Named tensor collection with a JSON config echo.
struct Checkpoint {
  std::string kind;  // "unet" or "full"
  nlohmann::json config;
  std::vector<NamedTensor<float>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint payloads into an existing named parameter set,
// requiring an exact match of names and shapes.
void restore_named_tensors(const Checkpoint& ckpt, std::vector<NamedTensor<float>> params);

}  // namespace aoseg

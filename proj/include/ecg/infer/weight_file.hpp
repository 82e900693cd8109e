#pragma once

// Weight file container (.ecgw)
//
//   offset 0   4 bytes   magic "ECGW"
//   offset 4   u32 LE    format version (1)
//   offset 8   u32 LE    header length H in bytes
//   offset 12  H bytes   UTF-8 JSON header
//   offset 12+H          tensor payload: little-endian IEEE-754 binary32,
//                        tensors back to back in the order of header.tensors
//
// Header fields: model_id, kind ("cnn" | "cnn+ensemble"), dtype ("f32le"),
// input_length, bn_epsilon, conv[] {name, in_channels, out_channels,
// kernel_length, stride, padding, pool_length}, dense[] {name, in_dim,
// out_dim, dropout_rate}, output {name, in_dim, out_dim}, tensors[]
// {name, shape} and, for cnn+ensemble, ensemble {feature_dim, base_score,
// trees[] {nodes[] {feature, threshold, left, right} | {leaf}}}.
//
// Per layer the tensor order is kernel/weight, bias, bn_gamma, bn_beta,
// bn_mean, bn_var (the output layer has weight and bias only).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ecg/infer/model.hpp"

namespace ecg::infer {

struct WeightFile {
  ModelKind kind = ModelKind::Cnn;
  CnnModel cnn;
  std::optional<TreeEnsemble> ensemble;
};

inline constexpr std::uint32_t kWeightFileVersion = 1;

// Decoding validates the tensor table against the layer plan before the
// shape chain, so a perturbed layer is the one reported. Throws
// ModelShapeError naming the layer ("header" for container damage).
WeightFile decode_weight_file(std::string_view bytes);
WeightFile read_weight_file(const std::filesystem::path& path);

// Parameters are narrowed to binary32 on encode.
std::string encode_weight_file(const WeightFile& file);
void write_weight_file(const std::filesystem::path& path, const WeightFile& file);

// Header JSON as a string, for inspection tools and golden tests.
std::string weight_file_header(std::string_view bytes);

// Rebuilds a container with a replaced header (payload kept verbatim).
std::string replace_weight_file_header(std::string_view bytes,
                                       std::string_view header_json);

}  // namespace ecg::infer

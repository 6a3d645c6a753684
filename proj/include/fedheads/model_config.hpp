#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace fedheads {

// Shape of the toy encoder classifier. hidden must divide evenly across
// heads; defaults are the desk-scale configuration used by the experiments.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 32;
  std::size_t ff_hidden = 64;
  std::size_t vocab = 32;
  std::size_t max_seq = 16;
  std::size_t classes = 3;
  std::size_t lora_rank = 4;
  std::int32_t eos_token = 1;

  std::size_t head_dim() const { return hidden / heads; }
  void validate() const;
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);
};

inline constexpr std::int32_t kPadToken = 0;

}  // namespace fedheads

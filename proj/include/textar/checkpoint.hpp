#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "textar/params.hpp"
#include "textar/tensor.hpp"

namespace textar {

// Self-describing parameter container: magic + format version, a JSON header
// (model config etc.), then one record per tensor with name, dtype tag,
// shape, and a raw little-endian float64 payload. Round-trips bit-exactly.
struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     const ParamStore& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace textar

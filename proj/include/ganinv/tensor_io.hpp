#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ganinv/tensor.hpp"

namespace ganinv {

/// Small single-file container for named float tensors plus a JSON metadata
/// blob; same integrity rules as model checkpoints.
struct TensorArchive {
  std::map<std::string, Tensor<float>> tensors;
  std::string meta_json;  // caller-owned JSON payload (may be "{}")
};

void save_tensor_archive(const std::filesystem::path& path,
                         const std::vector<std::pair<std::string, const Tensor<float>*>>& tensors,
                         const std::string& meta_json);

TensorArchive load_tensor_archive(const std::filesystem::path& path);

}  // namespace ganinv

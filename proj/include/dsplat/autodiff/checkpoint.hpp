// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter checkpoint:
//   "DSPLATCK" | u32 version | u8 scalar bytes (4 or 8)
//   | u32 metadata length | metadata (UTF-8 JSON)
//   | u32 entry count | entries...
// entry: u32 name length | name | u32 ndim | i64 dims[ndim] | payload
// All integers and scalars are little-endian.
//
#pragma once

#include "dsplat/autodiff/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dsplat::inline DSPLAT_ABI::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string metadata;
    int scalarBytes = 0;
    std::vector<std::pair<std::string, Tensor>> entries;

    const Tensor *find(const std::string &name) const;
};

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void saveCheckpoint(const std::filesystem::path &path,
                    const std::vector<std::pair<std::string, Tensor>> &entries,
                    const std::string &metadata);

/// Payloads stored at the other precision are converted on load.
Checkpoint loadCheckpoint(const std::filesystem::path &path);

} // namespace dsplat::inline DSPLAT_ABI::ad

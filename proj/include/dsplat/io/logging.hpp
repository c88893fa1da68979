// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

namespace dsplat::io {

/// Configures the default spdlog logger (stderr). The level comes from the
/// DSPLAT_LOG environment variable (trace|debug|info|warn|error|off), default info.
void initLogging();

} // namespace dsplat::io

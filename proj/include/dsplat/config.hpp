// Copyright Contributors to the dsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Scalar precision is a build-time property of each core library variant.
// dsplat_core_f32 and dsplat_core_f64 are compiled from the same sources; the
// inline namespace keeps both variants linkable into a single binary.
//
#pragma once

#ifndef DSPLAT_USE_DOUBLE
#define DSPLAT_USE_DOUBLE 0
#endif

#if DSPLAT_USE_DOUBLE
#define DSPLAT_ABI f64
#else
#define DSPLAT_ABI f32
#endif

namespace dsplat::inline DSPLAT_ABI {

#if DSPLAT_USE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

inline constexpr bool kDoublePrecision = DSPLAT_USE_DOUBLE != 0;

} // namespace dsplat::inline DSPLAT_ABI

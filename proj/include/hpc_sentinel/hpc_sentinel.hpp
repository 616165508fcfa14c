// Copyright 2026 The hpc-sentinel Authors
//
// Licensed under the Apache License v2.0 with LLVM Exceptions.
// See https://llvm.org/LICENSE.txt for license information.
// SPDX-License-Identifier: Apache-2.0 WITH LLVM-exception

#ifndef HPC_SENTINEL_HPC_SENTINEL_HPP_
#define HPC_SENTINEL_HPC_SENTINEL_HPP_

#include "hpc_sentinel/bench.hpp"
#include "hpc_sentinel/common.hpp"
#include "hpc_sentinel/crbm.hpp"
#include "hpc_sentinel/detect.hpp"
#include "hpc_sentinel/io.hpp"
#include "hpc_sentinel/lstm.hpp"
#include "hpc_sentinel/model.hpp"
#include "hpc_sentinel/pipeline.hpp"
#include "hpc_sentinel/reconstruct.hpp"
#include "hpc_sentinel/rng.hpp"
#include "hpc_sentinel/simulate.hpp"
#include "hpc_sentinel/trace.hpp"

#endif  // HPC_SENTINEL_HPC_SENTINEL_HPP_

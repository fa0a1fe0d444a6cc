// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace qreli {

/// Worker cap from QRELI_THREADS (0 or unset = hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across up to worker_count() threads. Each index
/// must write only to its own output slot; callers reduce afterwards in index
/// order so results never depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qreli

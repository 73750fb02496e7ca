// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace bbmf {

/// Selects between the OpenMP kernels and their serial reference versions.
enum class Execution { serial, parallel };

/// Sets the OpenMP thread count (no-op when n <= 0).
void set_threads(int n);
int max_threads();

}  // namespace bbmf

// SPDX-License-Identifier: Apache-2.0

//! Benchmarks for the scoring pipeline live under `benches/`.

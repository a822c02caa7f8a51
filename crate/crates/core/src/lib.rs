// Copyright 2026 The impulse-gcac Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod linalg;
pub mod observability;
pub mod schedule;
pub mod spectral;
pub mod synthesis;
pub mod witness;

// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "neglab/diffcore/adamw.hpp"
#include "neglab/diffcore/gradcheck.hpp"
#include "neglab/diffcore/ops.hpp"
#include "neglab/diffcore/params.hpp"
#include "neglab/diffcore/tape.hpp"
#include "neglab/diffcore/tensor.hpp"

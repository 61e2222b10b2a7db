// Copyright (c) 2026, The neglab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "neglab/interpret/ablation.hpp"
#include "neglab/interpret/attribution.hpp"
#include "neglab/interpret/svg.hpp"
#include "neglab/interpret/tsne.hpp"

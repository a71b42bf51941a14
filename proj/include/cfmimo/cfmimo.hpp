// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - link-level simulator for the cell-free massive MIMO uplink
// Copyright (C) 2026 cfmimo contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef cfmimo_cfmimo_H
#define cfmimo_cfmimo_H

#include "cfmimo/analytics.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/detection.hpp"
#include "cfmimo/estimation.hpp"
#include "cfmimo/experiments.hpp"
#include "cfmimo/geometry.hpp"
#include "cfmimo/parallel.hpp"
#include "cfmimo/rates.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/serialize.hpp"
#include "cfmimo/stats.hpp"

#endif

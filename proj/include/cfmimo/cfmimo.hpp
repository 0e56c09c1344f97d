// SPDX-License-Identifier: Apache-2.0
//
// cfmimo - cell-free massive MIMO IoT simulation and power control
// Copyright (C) 2026 The cfmimo authors
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


#pragma once

#include "common.hpp"
#include "random.hpp"
#include "parallel.hpp"
#include "netgen.hpp"
#include "channel.hpp"
#include "estimator.hpp"
#include "ul_sinr.hpp"
#include "ul_power.hpp"
#include "dl_sinr.hpp"
#include "socp.hpp"
#include "dl_power.hpp"
#include "mlp.hpp"
#include "io.hpp"
#include "harness.hpp"

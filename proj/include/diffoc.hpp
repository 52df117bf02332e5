/*
 Copyright 2026 The diffoc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/


#pragma once

// Library umbrella; the harness headers (JSON config, runners) live in
// diffoc/harness and need the vendored single-header libraries.

#include "diffoc/adam.hpp"
#include "diffoc/baselines.hpp"
#include "diffoc/classifier.hpp"
#include "diffoc/common.hpp"
#include "diffoc/dynamics.hpp"
#include "diffoc/gmm.hpp"
#include "diffoc/ilqr.hpp"
#include "diffoc/layers.hpp"
#include "diffoc/log.hpp"
#include "diffoc/lowrank.hpp"
#include "diffoc/mlp.hpp"
#include "diffoc/operators.hpp"
#include "diffoc/schedule.hpp"
#include "diffoc/score.hpp"
#include "diffoc/version.hpp"

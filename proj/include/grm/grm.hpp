/* Copyright 2026 The GRM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "grm/covariance.hpp"
#include "grm/data.hpp"
#include "grm/errors.hpp"
#include "grm/evaluation.hpp"
#include "grm/io.hpp"
#include "grm/linalg.hpp"
#include "grm/losses.hpp"
#include "grm/mlp.hpp"
#include "grm/optimizer.hpp"
#include "grm/rectifier.hpp"
#include "grm/training.hpp"

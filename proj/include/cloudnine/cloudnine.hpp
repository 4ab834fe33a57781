// Copyright 2026 The CloudNine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"
#include "cloudnine/impact.hpp"
#include "cloudnine/io.hpp"
#include "cloudnine/lrp.hpp"
#include "cloudnine/model.hpp"
#include "cloudnine/service.hpp"
#include "cloudnine/synthetic.hpp"

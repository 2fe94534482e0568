/*
 * Copyright (c) 2026 The streamtrap Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Convenience header pulling in the whole library.

#include "streamtrap/accuracy.hpp"
#include "streamtrap/commands.hpp"
#include "streamtrap/config.hpp"
#include "streamtrap/decision.hpp"
#include "streamtrap/embedding_store.hpp"
#include "streamtrap/errors.hpp"
#include "streamtrap/head.hpp"
#include "streamtrap/intervals.hpp"
#include "streamtrap/metadata.hpp"
#include "streamtrap/postprocess.hpp"
#include "streamtrap/reports.hpp"
#include "streamtrap/rng.hpp"
#include "streamtrap/shift_metrics.hpp"
#include "streamtrap/stream_engine.hpp"
#include "streamtrap/synthetic.hpp"
#include "streamtrap/training.hpp"

// Copyright 2026 The voqa Authors. All Rights Reserved.
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

// Umbrella header for the whole toolkit.

#include "voqa/audio.hpp"
#include "voqa/checkpoint.hpp"
#include "voqa/dataset.hpp"
#include "voqa/embedding.hpp"
#include "voqa/error.hpp"
#include "voqa/lld.hpp"
#include "voqa/loss.hpp"
#include "voqa/manifest.hpp"
#include "voqa/model.hpp"
#include "voqa/noise.hpp"
#include "voqa/optim.hpp"
#include "voqa/pipeline.hpp"
#include "voqa/pitch.hpp"
#include "voqa/spectral.hpp"
#include "voqa/split.hpp"
#include "voqa/synthetic.hpp"
#include "voqa/synthetic_corpus.hpp"
#include "voqa/train.hpp"

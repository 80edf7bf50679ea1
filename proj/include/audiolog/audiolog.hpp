// Copyright 2026 AudioLog Authors
// Umbrella header.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include "audiolog/autodiff.hpp"
#include "audiolog/checkpoint.hpp"
#include "audiolog/data.hpp"
#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/flac.hpp"
#include "audiolog/inference.hpp"
#include "audiolog/llm.hpp"
#include "audiolog/metrics.hpp"
#include "audiolog/model.hpp"
#include "audiolog/pipeline.hpp"
#include "audiolog/runconfig.hpp"
#include "audiolog/table.hpp"
#include "audiolog/tensor.hpp"
#include "audiolog/training.hpp"
#include "audiolog/wav.hpp"

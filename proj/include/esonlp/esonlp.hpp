#pragma once

#include "esonlp/corpus.hpp"
#include "esonlp/error.hpp"
#include "esonlp/eval.hpp"
#include "esonlp/features.hpp"
#include "esonlp/model.hpp"
#include "esonlp/pipeline.hpp"
#include "esonlp/preprocess.hpp"
#include "esonlp/rng.hpp"
#include "esonlp/rules_config.hpp"
#include "esonlp/sectionizer.hpp"
#include "esonlp/synth.hpp"
#include "esonlp/task.hpp"

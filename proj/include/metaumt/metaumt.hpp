#pragma once

#include "metaumt/checkpoint.hpp"
#include "metaumt/data/batching.hpp"
#include "metaumt/data/corpus_io.hpp"
#include "metaumt/data/noise.hpp"
#include "metaumt/data/synthetic.hpp"
#include "metaumt/data/vocabulary.hpp"
#include "metaumt/eval/bleu.hpp"
#include "metaumt/eval/evaluate.hpp"
#include "metaumt/eval/experiment.hpp"
#include "metaumt/eval/matrix.hpp"
#include "metaumt/eval/metrics.hpp"
#include "metaumt/eval/report.hpp"
#include "metaumt/losses.hpp"
#include "metaumt/meta/meta_engine.hpp"
#include "metaumt/meta/task.hpp"
#include "metaumt/meta/training.hpp"
#include "metaumt/model/mlm.hpp"
#include "metaumt/model/model_io.hpp"
#include "metaumt/model/transformer.hpp"
#include "metaumt/ops.hpp"
#include "metaumt/optim.hpp"
#include "metaumt/param_set.hpp"
#include "metaumt/rng.hpp"
#include "metaumt/tensor.hpp"

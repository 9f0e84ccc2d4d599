#pragma once

#include "mvdr/embed_store.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/eval/metrics.hpp"
#include "mvdr/eval/stats.hpp"
#include "mvdr/eval/sweep.hpp"
#include "mvdr/eval/synth.hpp"
#include "mvdr/eval/trec.hpp"
#include "mvdr/first_stage.hpp"
#include "mvdr/ivfpq.hpp"
#include "mvdr/kmeans.hpp"
#include "mvdr/parallel.hpp"
#include "mvdr/pq.hpp"
#include "mvdr/rerank.hpp"
#include "mvdr/types.hpp"

#pragma once

#include "wavesched/decode.hpp"
#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"
#include "wavesched/external.hpp"
#include "wavesched/harness.hpp"
#include "wavesched/hash.hpp"
#include "wavesched/metrics.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/seqcore.hpp"
#include "wavesched/trace.hpp"
#include "wavesched/trace_io.hpp"
#include "wavesched/verify.hpp"

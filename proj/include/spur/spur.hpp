#pragma once

// Convenience umbrella for the whole pipeline. The HTTP provider is not
// included here; pull in spur/gateway_http.hpp explicitly where needed.

#include "spur/corpus.hpp"
#include "spur/digest.hpp"
#include "spur/distill.hpp"
#include "spur/errors.hpp"
#include "spur/extraction.hpp"
#include "spur/gateway.hpp"
#include "spur/metrics.hpp"
#include "spur/prompts.hpp"
#include "spur/rubric.hpp"
#include "spur/scoring.hpp"
#include "spur/synthbench.hpp"
#include "spur/util.hpp"

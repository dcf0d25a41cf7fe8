#pragma once

// Umbrella header: the whole weakly-supervised grounding library.

#include "vtg/errors.hpp"
#include "vtg/rng.hpp"
#include "vtg/parallel.hpp"
#include "vtg/phrase.hpp"
#include "vtg/corpus.hpp"
#include "vtg/embedding.hpp"
#include "vtg/concept_branch.hpp"
#include "vtg/nn.hpp"
#include "vtg/checkpoint.hpp"
#include "vtg/prediction.hpp"
#include "vtg/grounding.hpp"
#include "vtg/evaluation.hpp"
#include "vtg/training.hpp"
#include "vtg/synthetic.hpp"
#include "vtg/overlay.hpp"

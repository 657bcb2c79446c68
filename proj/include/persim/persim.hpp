#pragma once

// Umbrella header for the persim evaluation harness.

#include "persim/backend.hpp"
#include "persim/cassette.hpp"
#include "persim/corpus.hpp"
#include "persim/dialogue.hpp"
#include "persim/errors.hpp"
#include "persim/evaluate.hpp"
#include "persim/http_backend.hpp"
#include "persim/jsonl.hpp"
#include "persim/persona.hpp"
#include "persim/profile.hpp"
#include "persim/prompts.hpp"
#include "persim/recommend.hpp"
#include "persim/retry.hpp"
#include "persim/rng.hpp"
#include "persim/sampling.hpp"
#include "persim/strings.hpp"

#pragma once

#include "corpus.hpp"
#include "date.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "generator.hpp"
#include "index.hpp"
#include "judgments.hpp"
#include "prng.hpp"
#include "query.hpp"
#include "retrieval.hpp"
#include "service.hpp"
#include "snapshot.hpp"
#include "textnlp.hpp"
#include "tokenize.hpp"
#include "vocabulary.hpp"

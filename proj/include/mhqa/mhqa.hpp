#pragma once

#include "mhqa/attention_dump.hpp"
#include "mhqa/attnstats.hpp"
#include "mhqa/blockmap.hpp"
#include "mhqa/corpus.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/evalkit.hpp"
#include "mhqa/layout.hpp"
#include "mhqa/masks.hpp"
#include "mhqa/permute.hpp"
#include "mhqa/promptkit.hpp"
#include "mhqa/rerank.hpp"
#include "mhqa/toy_extract.hpp"
#include "mhqa/toylm.hpp"

#pragma once

#include "idiomkit/grammar.hpp"
#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/trace.hpp"
#include "idiomkit/io.hpp"
#include "idiomkit/miner.hpp"
#include "idiomkit/ranking.hpp"
#include "idiomkit/marking.hpp"
#include "idiomkit/scorer.hpp"
#include "idiomkit/objective.hpp"
#include "idiomkit/decode.hpp"
#include "idiomkit/synthetic.hpp"

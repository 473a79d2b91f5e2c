#ifndef FINKIT_FINKIT_HPP
#define FINKIT_FINKIT_HPP

#include "errors.hpp"
#include "corpus_io.hpp"
#include "tokenize.hpp"
#include "chunking.hpp"
#include "retrieval.hpp"
#include "reduce.hpp"
#include "cluster.hpp"
#include "topics.hpp"
#include "topic_judge.hpp"
#include "http_judge.hpp"
#include "pipeline.hpp"

#endif

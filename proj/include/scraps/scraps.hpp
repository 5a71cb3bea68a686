#pragma once

#include <scraps/audio.hpp>
#include <scraps/backbone.hpp>
#include <scraps/checkpoint.hpp>
#include <scraps/common.hpp>
#include <scraps/contrastive.hpp>
#include <scraps/corpus.hpp>
#include <scraps/corruption.hpp>
#include <scraps/encoder.hpp>
#include <scraps/evaluation.hpp>
#include <scraps/layers.hpp>
#include <scraps/metrics.hpp>
#include <scraps/report.hpp>
#include <scraps/smel.hpp>
#include <scraps/standardize.hpp>
#include <scraps/train.hpp>
#include <scraps/vocab.hpp>

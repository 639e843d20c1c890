#pragma once

#include "secaps/attention.hpp"
#include "secaps/capsule.hpp"
#include "secaps/checkpoint.hpp"
#include "secaps/data.hpp"
#include "secaps/errors.hpp"
#include "secaps/gradcheck.hpp"
#include "secaps/gradcheck_suite.hpp"
#include "secaps/lstm.hpp"
#include "secaps/metrics.hpp"
#include "secaps/model.hpp"
#include "secaps/tensor.hpp"
#include "secaps/train.hpp"

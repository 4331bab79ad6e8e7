#pragma once

#include "frrn/adam.hpp"
#include "frrn/augmentation.hpp"
#include "frrn/checkpoint.hpp"
#include "frrn/data.hpp"
#include "frrn/evaluation.hpp"
#include "frrn/kernels.hpp"
#include "frrn/layers.hpp"
#include "frrn/loss.hpp"
#include "frrn/network.hpp"
#include "frrn/ops.hpp"
#include "frrn/params.hpp"
#include "frrn/sample.hpp"
#include "frrn/tape.hpp"
#include "frrn/tensor.hpp"
#include "frrn/trainer.hpp"
#include "frrn/gradcheck.hpp"

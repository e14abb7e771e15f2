#pragma once

#include "fedrewind/dataset.hpp"
#include "fedrewind/experiment.hpp"
#include "fedrewind/federation.hpp"
#include "fedrewind/idx.hpp"
#include "fedrewind/metrics.hpp"
#include "fedrewind/nn.hpp"
#include "fedrewind/partition.hpp"
#include "fedrewind/random.hpp"
#include "fedrewind/synthetic.hpp"
#include "fedrewind/task_stream.hpp"

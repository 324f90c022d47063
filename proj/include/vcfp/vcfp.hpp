#pragma once

#include "vcfp/classifiers.hpp"
#include "vcfp/defense.hpp"
#include "vcfp/error.hpp"
#include "vcfp/eval.hpp"
#include "vcfp/features.hpp"
#include "vcfp/io.hpp"
#include "vcfp/matrix.hpp"
#include "vcfp/pipeline.hpp"
#include "vcfp/preprocess.hpp"
#include "vcfp/random.hpp"
#include "vcfp/report.hpp"
#include "vcfp/synthgen.hpp"
#include "vcfp/trace.hpp"

#ifndef BUNDLECHOICE_HPP
#define BUNDLECHOICE_HPP

#include "bundlechoice/chain.hpp"
#include "bundlechoice/chain_io.hpp"
#include "bundlechoice/choice_set.hpp"
#include "bundlechoice/config.hpp"
#include "bundlechoice/design.hpp"
#include "bundlechoice/dgp.hpp"
#include "bundlechoice/error.hpp"
#include "bundlechoice/io_util.hpp"
#include "bundlechoice/kernels.hpp"
#include "bundlechoice/layout.hpp"
#include "bundlechoice/loadings.hpp"
#include "bundlechoice/model_spec.hpp"
#include "bundlechoice/panel.hpp"
#include "bundlechoice/panel_csv.hpp"
#include "bundlechoice/parallel.hpp"
#include "bundlechoice/predict.hpp"
#include "bundlechoice/rng.hpp"
#include "bundlechoice/sampler.hpp"
#include "bundlechoice/study.hpp"
#include "bundlechoice/version.hpp"

#endif // BUNDLECHOICE_HPP

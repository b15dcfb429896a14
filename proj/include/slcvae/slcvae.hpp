#pragma once

#include "slcvae/adam.hpp"
#include "slcvae/autodiff.hpp"
#include "slcvae/checkpoint.hpp"
#include "slcvae/config.hpp"
#include "slcvae/corpus.hpp"
#include "slcvae/diagnostics.hpp"
#include "slcvae/eval.hpp"
#include "slcvae/gradcheck.hpp"
#include "slcvae/latent.hpp"
#include "slcvae/log.hpp"
#include "slcvae/model.hpp"
#include "slcvae/rng.hpp"
#include "slcvae/seq_nn.hpp"
#include "slcvae/tensor.hpp"
#include "slcvae/train.hpp"

#pragma once

#include "sarcnet/checkpoint.hpp"
#include "sarcnet/config.hpp"
#include "sarcnet/data.hpp"
#include "sarcnet/digest.hpp"
#include "sarcnet/embeddings.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/gradcheck.hpp"
#include "sarcnet/inference.hpp"
#include "sarcnet/layers.hpp"
#include "sarcnet/model.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/stopwords.hpp"
#include "sarcnet/tensor.hpp"
#include "sarcnet/train.hpp"

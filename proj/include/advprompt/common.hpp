#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace advprompt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Index into a Vocabulary. Index 0 is always the UNK token.
using TokenId = std::int32_t;

} // namespace advprompt

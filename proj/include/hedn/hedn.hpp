#ifndef HEDN_HEDN_HPP
#define HEDN_HEDN_HPP

#include "hedn/checkpoint.hpp"
#include "hedn/clustering.hpp"
#include "hedn/data.hpp"
#include "hedn/engine.hpp"
#include "hedn/error.hpp"
#include "hedn/layers.hpp"
#include "hedn/losses.hpp"
#include "hedn/matrix.hpp"
#include "hedn/nets.hpp"
#include "hedn/prototypes.hpp"
#include "hedn/report.hpp"
#include "hedn/rmsprop.hpp"

#endif  // HEDN_HEDN_HPP

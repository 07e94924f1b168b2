// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gradprint/adapters.hpp"
#include "gradprint/dtype.hpp"
#include "gradprint/error.hpp"
#include "gradprint/famclass.hpp"
#include "gradprint/fingerprint.hpp"
#include "gradprint/gradsig.hpp"
#include "gradprint/perturb.hpp"
#include "gradprint/rng.hpp"
#include "gradprint/synth.hpp"
#include "gradprint/taxonomy.hpp"
#include "gradprint/tensorfile.hpp"
#include "gradprint/version.hpp"

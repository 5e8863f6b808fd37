#pragma once

#include "phaselock/errors.hpp"
#include "phaselock/gradcheck.hpp"
#include "phaselock/ipa.hpp"
#include "phaselock/kuramoto.hpp"
#include "phaselock/optim.hpp"
#include "phaselock/psca.hpp"
#include "phaselock/rpa.hpp"
#include "phaselock/signalcore.hpp"

#pragma once

#include "relucert/linalg.hpp"
#include "relucert/rng.hpp"
#include "relucert/format.hpp"
#include "relucert/network.hpp"
#include "relucert/init.hpp"
#include "relucert/certificate.hpp"
#include "relucert/trainer.hpp"
#include "relucert/analysis.hpp"
#include "relucert/io.hpp"
#include "relucert/config.hpp"
#include "relucert/experiment.hpp"

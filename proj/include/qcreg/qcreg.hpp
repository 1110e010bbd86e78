#pragma once

#include "qcreg/mesh.hpp"
#include "qcreg/mesh_io.hpp"
#include "qcreg/locate.hpp"
#include "qcreg/generators.hpp"
#include "qcreg/beltrami.hpp"
#include "qcreg/diffgeo.hpp"
#include "qcreg/parameterization.hpp"
#include "qcreg/spectral.hpp"
#include "qcreg/landmark.hpp"
#include "qcreg/synth.hpp"
#include "qcreg/registration.hpp"
#include "qcreg/report.hpp"
#include "qcreg/pipeline.hpp"

#pragma once

#include "tubeseg/blood_model.hpp"
#include "tubeseg/centreline_io.hpp"
#include "tubeseg/cpr.hpp"
#include "tubeseg/levelset.hpp"
#include "tubeseg/metaimage.hpp"
#include "tubeseg/morphology.hpp"
#include "tubeseg/phantom.hpp"
#include "tubeseg/pipeline/config.hpp"
#include "tubeseg/pipeline/report.hpp"
#include "tubeseg/pipeline/run.hpp"
#include "tubeseg/propagation.hpp"
#include "tubeseg/seed_detector.hpp"
#include "tubeseg/skeleton.hpp"
#include "tubeseg/vesselness.hpp"
#include "tubeseg/volume.hpp"

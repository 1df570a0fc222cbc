#pragma once

#include "wdd/attention.hpp"
#include "wdd/circular.hpp"
#include "wdd/cli.hpp"
#include "wdd/clustering.hpp"
#include "wdd/config.hpp"
#include "wdd/errors.hpp"
#include "wdd/fft.hpp"
#include "wdd/filter_net.hpp"
#include "wdd/geo.hpp"
#include "wdd/homography.hpp"
#include "wdd/image.hpp"
#include "wdd/ingest.hpp"
#include "wdd/mapping.hpp"
#include "wdd/orientation.hpp"
#include "wdd/pipeline.hpp"
#include "wdd/records.hpp"
#include "wdd/snippet_io.hpp"
#include "wdd/solar.hpp"
#include "wdd/source.hpp"
#include "wdd/synth.hpp"
#include "wdd/time.hpp"

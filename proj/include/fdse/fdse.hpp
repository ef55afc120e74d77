#ifndef FDSE_FDSE_HPP
#define FDSE_FDSE_HPP

#include "fdse/aligner.hpp"
#include "fdse/analyzer.hpp"
#include "fdse/augment.hpp"
#include "fdse/bounded_queue.hpp"
#include "fdse/codec.hpp"
#include "fdse/dataset.hpp"
#include "fdse/dialog.hpp"
#include "fdse/frame.hpp"
#include "fdse/frame_io.hpp"
#include "fdse/loss_mask.hpp"
#include "fdse/rng.hpp"
#include "fdse/runtime.hpp"
#include "fdse/server.hpp"
#include "fdse/wav.hpp"
#include "fdse/wire.hpp"

#endif  // FDSE_FDSE_HPP

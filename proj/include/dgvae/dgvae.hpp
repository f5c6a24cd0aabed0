#pragma once

#include "dgvae/error.hpp"
#include "dgvae/evaluator.hpp"
#include "dgvae/ingestion.hpp"
#include "dgvae/interpret.hpp"
#include "dgvae/item_graph.hpp"
#include "dgvae/mi_align.hpp"
#include "dgvae/model.hpp"
#include "dgvae/pipeline.hpp"
#include "dgvae/synth.hpp"
#include "dgvae/trainer.hpp"
#include "dgvae/version.hpp"

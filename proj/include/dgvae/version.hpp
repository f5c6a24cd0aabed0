#pragma once

#define DGVAE_VERSION "0.1.0"

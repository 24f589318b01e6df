#pragma once

#include <lpids/dyadic.hpp>
#include <lpids/error.hpp>
#include <lpids/ids.hpp>
#include <lpids/lattice_sums.hpp>
#include <lpids/parallel.hpp>
#include <lpids/spectral.hpp>
#include <lpids/spectrum_io.hpp>

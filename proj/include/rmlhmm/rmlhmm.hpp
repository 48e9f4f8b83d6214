#ifndef RMLHMM_RMLHMM_HPP_INCLUDED
#define RMLHMM_RMLHMM_HPP_INCLUDED

// Recursive maximum likelihood for finite-state hidden Markov models.

#include "densities.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "rml.hpp"
#include "rng.hpp"

#endif // RMLHMM_RMLHMM_HPP_INCLUDED

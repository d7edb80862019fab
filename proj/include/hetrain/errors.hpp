// Copyright 2026 The hetrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hetrain {

    class Error : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Register lengths or matrix shapes do not line up.
    class DimensionError : public Error {
    public:
        using Error::Error;
    };

    /// A ciphertext multiplication would drive a register below level 0,
    /// i.e. the modulus chain is too short for the circuit.
    class DepthBudgetError : public Error {
    public:
        using Error::Error;
    };

    /// Plain register where a Cipher one is required, or the reverse.
    class KindError : public Error {
    public:
        using Error::Error;
    };

    class LayoutError : public Error {
    public:
        using Error::Error;
    };

    /// Shape the transposition cannot handle (N not a multiple of M without the
    /// experimental ragged path).
    class UnsupportedShapeError : public Error {
    public:
        using Error::Error;
    };

    /// Operation called out of order, e.g. backward without a cached forward.
    class StateError : public Error {
    public:
        using Error::Error;
    };

    class ConfigError : public Error {
    public:
        using Error::Error;
    };

    class DataError : public Error {
    public:
        using Error::Error;
    };

}  // namespace hetrain

//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace molfedgan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MOLFEDGAN_DEFINE_ERROR(Name)              \
  class Name : public Error {                     \
   public:                                        \
    using Error::Error;                           \
  }

MOLFEDGAN_DEFINE_ERROR(ShapeMismatch);
MOLFEDGAN_DEFINE_ERROR(NonScalarOutput);
MOLFEDGAN_DEFINE_ERROR(NonPositiveTemperature);
MOLFEDGAN_DEFINE_ERROR(NotADistribution);
MOLFEDGAN_DEFINE_ERROR(InvalidGraph);
MOLFEDGAN_DEFINE_ERROR(GraphTooLarge);
MOLFEDGAN_DEFINE_ERROR(EmptyDataset);
MOLFEDGAN_DEFINE_ERROR(BadRatios);
MOLFEDGAN_DEFINE_ERROR(ArchitectureMismatch);
MOLFEDGAN_DEFINE_ERROR(WidthMismatch);
MOLFEDGAN_DEFINE_ERROR(EmptySet);
MOLFEDGAN_DEFINE_ERROR(EmptyReference);
MOLFEDGAN_DEFINE_ERROR(CorruptCheckpoint);
MOLFEDGAN_DEFINE_ERROR(ConfigError);
MOLFEDGAN_DEFINE_ERROR(MultipleSweepAxes);
MOLFEDGAN_DEFINE_ERROR(DatasetError);

#undef MOLFEDGAN_DEFINE_ERROR

class FileNotFound : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class MissingColumn : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

}  // namespace molfedgan

// Copyright 2026 AudioLog Authors
// Error types shared across the library.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace audiolog {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Audio and file ingestion.
struct UnreadableFile final : Error { using Error::Error; };
struct UnsupportedFormat final : Error { using Error::Error; };
struct MissingAudio final : Error { using Error::Error; };
struct MalformedRow final : Error { using Error::Error; };
struct UnknownLabel final : Error { using Error::Error; };

// Feature / model shape contracts.
struct EmptyClip final : Error { using Error::Error; };
struct ShapeMismatch final : Error { using Error::Error; };

// Training and evaluation.
struct DivergedTraining final : Error { using Error::Error; };
struct EmptyDataset final : Error { using Error::Error; };
struct LengthMismatch final : Error { using Error::Error; };
struct EmptyInput final : Error { using Error::Error; };
struct EmptyReference final : Error { using Error::Error; };

// Table assembly.
struct CoverageGap final : Error { using Error::Error; };
struct VocabularyMismatch final : Error { using Error::Error; };

// LLM providers.
class ProviderTimeout final : public Error {
 public:
  ProviderTimeout(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};
struct ProviderRejected final : Error { using Error::Error; };
struct MalformedResponse final : Error { using Error::Error; };

// Configuration.
struct ConfigError final : Error { using Error::Error; };

}  // namespace audiolog

// SPDX-License-Identifier: Apache-2.0
//
// Error taxonomy shared by all dynasr components. Every failure surfaced by
// the library is a dynasr::Error carrying one code from this closed set.

#pragma once

#include <stdexcept>
#include <string>

namespace dynasr {

enum class Err {
  // audio codec
  MalformedWav,
  UnsupportedEncoding,
  EmptyAudio,
  // preprocessing
  AudioAllSilent,
  ClipTooShort,
  // classifier runtime
  ManifestMissing,
  BadManifest,
  TensorShapeMismatch,
  NonFiniteWeight,
  DimensionMismatch,
  FrontEndMismatch,
  // identification cascade
  NoAccentModel,
  LowLidConfidence,
  // model registry
  DuplicateKey,
  ModelLargerThanBudget,
  ArtifactMissing,
  UnknownModel,
  BudgetExhausted,
  LoadFailed,
  // recognizer backends
  BackendTimeout,
  BackendCrashed,
  InvalidBackendOutput,
  // evaluation
  EmptyReference,
  InvalidMatrix,
  TargetUnreachable,
  EmptyWorkload,
  IoFailure,
  // configuration
  BadConfig,
};

inline const char* to_string(Err e) {
  switch (e) {
    case Err::MalformedWav: return "MalformedWav";
    case Err::UnsupportedEncoding: return "UnsupportedEncoding";
    case Err::EmptyAudio: return "EmptyAudio";
    case Err::AudioAllSilent: return "AudioAllSilent";
    case Err::ClipTooShort: return "ClipTooShort";
    case Err::ManifestMissing: return "ManifestMissing";
    case Err::BadManifest: return "BadManifest";
    case Err::TensorShapeMismatch: return "TensorShapeMismatch";
    case Err::NonFiniteWeight: return "NonFiniteWeight";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::FrontEndMismatch: return "FrontEndMismatch";
    case Err::NoAccentModel: return "NoAccentModel";
    case Err::LowLidConfidence: return "LowLidConfidence";
    case Err::DuplicateKey: return "DuplicateKey";
    case Err::ModelLargerThanBudget: return "ModelLargerThanBudget";
    case Err::ArtifactMissing: return "ArtifactMissing";
    case Err::UnknownModel: return "UnknownModel";
    case Err::BudgetExhausted: return "BudgetExhausted";
    case Err::LoadFailed: return "LoadFailed";
    case Err::BackendTimeout: return "BackendTimeout";
    case Err::BackendCrashed: return "BackendCrashed";
    case Err::InvalidBackendOutput: return "InvalidBackendOutput";
    case Err::EmptyReference: return "EmptyReference";
    case Err::InvalidMatrix: return "InvalidMatrix";
    case Err::TargetUnreachable: return "TargetUnreachable";
    case Err::EmptyWorkload: return "EmptyWorkload";
    case Err::IoFailure: return "IoFailure";
    case Err::BadConfig: return "BadConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Err code() const noexcept { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace dynasr

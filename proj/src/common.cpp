#include "gph/common.hpp"

namespace gph {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::FileUnreadable: return "FileUnreadable";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownParadigm: return "UnknownParadigm";
    case ErrorCode::CorpusMismatch: return "CorpusMismatch";
    case ErrorCode::EmptyExplanation: return "EmptyExplanation";
    case ErrorCode::EmptyExplanationSet: return "EmptyExplanationSet";
    case ErrorCode::ShotOverlapsEvaluationPair: return "ShotOverlapsEvaluationPair";
    case ErrorCode::ScaffoldConflict: return "ScaffoldConflict";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::NonRetryableProviderError: return "NonRetryableProviderError";
    case ErrorCode::TranscriptMissingEntry: return "TranscriptMissingEntry";
    case ErrorCode::CacheUnreadable: return "CacheUnreadable";
    case ErrorCode::ImportConflict: return "ImportConflict";
    case ErrorCode::MissingExplanation: return "MissingExplanation";
    case ErrorCode::HygieneFailure: return "HygieneFailure";
    case ErrorCode::EmptyJudgmentSet: return "EmptyJudgmentSet";
    case ErrorCode::MissingGroup: return "MissingGroup";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BackendFailure:
    case ErrorCode::EmptyResponse:
    case ErrorCode::NonRetryableProviderError:
      return ExitCode::BackendFailure;
    case ErrorCode::MalformedRecord:
    case ErrorCode::EmptyCorpus:
    case ErrorCode::CorpusMismatch:
    case ErrorCode::TranscriptMissingEntry:
    case ErrorCode::CacheUnreadable:
    case ErrorCode::ImportConflict:
    case ErrorCode::HygieneFailure:
      return ExitCode::DataIntegrity;
    default:
      return ExitCode::UserError;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::Blimp: return "BLIMP";
    case Dataset::Sling: return "SLING";
    case Dataset::Rublimp: return "RUBLIMP";
    case Dataset::Custom: return "CUSTOM";
  }
  return "CUSTOM";
}

Dataset parse_dataset(std::string_view s) {
  if (s == "BLIMP") return Dataset::Blimp;
  if (s == "SLING") return Dataset::Sling;
  if (s == "RUBLIMP") return Dataset::Rublimp;
  if (s == "CUSTOM") return Dataset::Custom;
  throw Error(ErrorCode::InvalidArgument, "unknown dataset '" + std::string(s) + "'");
}

std::string_view to_string(Order o) {
  return o == Order::GoodFirst ? "GOOD_FIRST" : "BAD_FIRST";
}

Order parse_order(std::string_view s) {
  if (s == "GOOD_FIRST") return Order::GoodFirst;
  if (s == "BAD_FIRST") return Order::BadFirst;
  throw Error(ErrorCode::InvalidArgument, "unknown order '" + std::string(s) + "'");
}

std::string_view to_string(Audience a) {
  return a == Audience::Beginner ? "beginner" : "expert";
}

Audience parse_audience(std::string_view s) {
  if (s == "beginner") return Audience::Beginner;
  if (s == "expert") return Audience::Expert;
  throw Error(ErrorCode::InvalidArgument, "unknown audience '" + std::string(s) + "'");
}

std::string_view audience_phrase(Audience a) {
  return a == Audience::Beginner ? "novice learner" : "expert linguist";
}

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::Unparseable: return "UNPARSEABLE";
  }
  return "UNPARSEABLE";
}

Choice parse_choice(std::string_view s) {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  if (s == "UNPARSEABLE") return Choice::Unparseable;
  throw Error(ErrorCode::InvalidArgument, "unknown choice '" + std::string(s) + "'");
}

Choice correct_letter(Order order) {
  return order == Order::GoodFirst ? Choice::A : Choice::B;
}

}  // namespace gph

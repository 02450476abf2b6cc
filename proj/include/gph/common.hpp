#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gph {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  FileUnreadable,
  MalformedRecord,
  EmptyCorpus,
  UnknownParadigm,
  CorpusMismatch,
  EmptyExplanation,
  EmptyExplanationSet,
  ShotOverlapsEvaluationPair,
  ScaffoldConflict,
  EmptyResponse,
  BackendFailure,
  AuthMissing,
  NonRetryableProviderError,
  TranscriptMissingEntry,
  CacheUnreadable,
  ImportConflict,
  MissingExplanation,
  HygieneFailure,
  EmptyJudgmentSet,
  MissingGroup,
  LengthMismatch,
};

std::string_view to_string(ErrorCode code);

/// Process exit codes of the CLI. Stable contract for scripts.
enum class ExitCode : int { Ok = 0, UserError = 1, BackendFailure = 2, DataIntegrity = 3 };

ExitCode exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Dataset { Blimp, Sling, Rublimp, Custom };

std::string_view to_string(Dataset d);
Dataset parse_dataset(std::string_view s);

/// Which slot the grammatical sentence occupies.
enum class Order { GoodFirst, BadFirst };

std::string_view to_string(Order o);
Order parse_order(std::string_view s);

enum class Audience { Beginner, Expert };

std::string_view to_string(Audience a);
Audience parse_audience(std::string_view s);
/// Phrase substituted into instruction templates.
std::string_view audience_phrase(Audience a);

enum class Choice { A, B, Unparseable };

std::string_view to_string(Choice c);
Choice parse_choice(std::string_view s);

/// Letter of the grammatical sentence under a presentation order.
Choice correct_letter(Order order);

}  // namespace gph

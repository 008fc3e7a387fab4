#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mhqa {

// Root of every error thrown by the library. Catch this at tool boundaries.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record. `line` is 1-based; 0 means "not line-oriented".
class ParseError : public Error {
 public:
  ParseError(std::string field, std::size_t line, const std::string& detail)
      : Error("line " + std::to_string(line) + ": field '" + field + "': " + detail),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

// Well-formed record that violates a domain contract (gold count, hop labels...).
class ValidationError : public Error {
 public:
  ValidationError(std::string qid, const std::string& detail)
      : Error("question '" + qid + "': " + detail), qid_(std::move(qid)) {}

  const std::string& qid() const noexcept { return qid_; }

 private:
  std::string qid_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  PlanningError(std::string qid, std::size_t required, std::size_t available)
      : Error("question '" + qid + "': forward-gap layout needs " + std::to_string(required) +
              " noise documents, only " + std::to_string(available) + " available"),
        qid_(std::move(qid)),
        required_(required),
        available_(available) {}

  const std::string& qid() const noexcept { return qid_; }
  std::size_t required() const noexcept { return required_; }
  std::size_t available() const noexcept { return available_; }

 private:
  std::string qid_;
  std::size_t required_;
  std::size_t available_;
};

// Binary/sidecar file that does not follow its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MissingRowError : public Error {
 public:
  explicit MissingRowError(std::size_t token)
      : Error("token " + std::to_string(token) + " has no stored attention row"), token_(token) {}

  std::size_t token() const noexcept { return token_; }

 private:
  std::size_t token_;
};

struct TokenGap {
  std::size_t begin;
  std::size_t end;
};

// Block map does not tile [0, seq_len): lists uncovered ranges and overlaps.
class CoverageError : public Error {
 public:
  CoverageError(std::vector<TokenGap> gaps, std::vector<std::size_t> overlaps)
      : Error(describe(gaps, overlaps)), gaps_(std::move(gaps)), overlaps_(std::move(overlaps)) {}

  const std::vector<TokenGap>& gaps() const noexcept { return gaps_; }
  const std::vector<std::size_t>& overlaps() const noexcept { return overlaps_; }

 private:
  static std::string describe(const std::vector<TokenGap>& gaps,
                              const std::vector<std::size_t>& overlaps) {
    std::string msg = "block map does not partition the sequence;";
    if (!gaps.empty()) {
      msg += " gaps:";
      for (const auto& g : gaps) {
        msg += " [" + std::to_string(g.begin) + "," + std::to_string(g.end) + ")";
      }
    }
    if (!overlaps.empty()) {
      msg += " tokens covered twice:";
      for (auto t : overlaps) msg += " " + std::to_string(t);
    }
    return msg;
  }

  std::vector<TokenGap> gaps_;
  std::vector<std::size_t> overlaps_;
};

}  // namespace mhqa

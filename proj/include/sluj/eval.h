#ifndef SLUJ_EVAL_H_
#define SLUJ_EVAL_H_

// conlleval-style chunk F1 for slot filling and accuracy for intents.

#include <span>
#include <string>
#include <vector>

namespace sluj {

struct Chunk {
  std::string label;  // without the B-/I- prefix
  size_t start = 0;
  size_t end = 0;     // inclusive

  bool operator==(const Chunk&) const = default;
};

// Maximal B-x I-x* runs. An I-x that does not continue an open x chunk
// starts a new one. Labels that are not B-/I- close any open chunk.
std::vector<Chunk> extract_chunks(std::span<const std::string> labels);

// Inverse of extract_chunks for non-overlapping chunks.
std::vector<std::string> chunks_to_bio(std::span<const Chunk> chunks,
                                       size_t length);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged over exact (label, span) matches. P = 0 without
// predictions, R = 0 without gold chunks, F1 = 0 when P + R = 0.
PrecisionRecall slot_f1(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred);

// Fraction of exact matches. Empty input is a ContractError.
double intent_accuracy(std::span<const std::string> gold,
                       std::span<const std::string> pred);

struct DatasetMetrics {
  std::string dataset;
  double slot_f1 = 0.0;
  double intent_accuracy = 0.0;
};

struct ReportRow {
  std::string model;
  std::vector<DatasetMetrics> datasets;
};

// Pipe-separated table with "<dataset> Slot (F1)" and "<dataset> Intent
// (Acc)" columns per dataset, values in percent with two decimals. A row
// without a dataset shows "--" there.
std::string report(std::span<const ReportRow> rows);

}  // namespace sluj

#endif  // SLUJ_EVAL_H_

#include "sluj/eval.h"

#include <cstdio>
#include <optional>

#include "sluj/errors.h"

namespace sluj {

std::vector<Chunk> extract_chunks(std::span<const std::string> labels) {
  std::vector<Chunk> chunks;
  std::optional<Chunk> open;
  auto close = [&] {
    if (open) chunks.push_back(*open);
    open.reset();
  };
  for (size_t i = 0; i < labels.size(); ++i) {
    const std::string& l = labels[i];
    const bool begin = l.size() > 2 && l[0] == 'B' && l[1] == '-';
    const bool inside = l.size() > 2 && l[0] == 'I' && l[1] == '-';
    if (!begin && !inside) {
      close();
      continue;
    }
    std::string type = l.substr(2);
    if (inside && open && open->label == type) {
      open->end = i;
      continue;
    }
    close();
    open = Chunk{std::move(type), i, i};
  }
  close();
  return chunks;
}

std::vector<std::string> chunks_to_bio(std::span<const Chunk> chunks,
                                       size_t length) {
  std::vector<std::string> labels(length, "O");
  for (const Chunk& c : chunks) {
    if (c.end >= length || c.start > c.end) {
      throw ContractError("chunk outside sequence of " + std::to_string(length));
    }
    labels[c.start] = "B-" + c.label;
    for (size_t i = c.start + 1; i <= c.end; ++i) labels[i] = "I-" + c.label;
  }
  return labels;
}

PrecisionRecall slot_f1(const std::vector<std::vector<std::string>>& gold,
                        const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("slot_f1: " + std::to_string(gold.size()) +
                        " gold sequences vs " + std::to_string(pred.size()) +
                        " predicted");
  }
  size_t correct = 0, n_gold = 0, n_pred = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw ContractError("slot_f1: sentence " + std::to_string(s) +
                          " has different gold and predicted lengths");
    }
    auto g = extract_chunks(gold[s]);
    auto p = extract_chunks(pred[s]);
    n_gold += g.size();
    n_pred += p.size();
    for (const Chunk& c : p) {
      for (const Chunk& d : g) {
        if (c == d) {
          ++correct;
          break;
        }
      }
    }
  }
  PrecisionRecall r;
  r.precision = n_pred ? static_cast<double>(correct) / n_pred : 0.0;
  r.recall = n_gold ? static_cast<double>(correct) / n_gold : 0.0;
  if (r.precision + r.recall > 0) {
    r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

double intent_accuracy(std::span<const std::string> gold,
                       std::span<const std::string> pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("intent_accuracy: length mismatch");
  }
  if (gold.empty()) throw ContractError("intent_accuracy: no examples");
  size_t hits = 0;
  for (size_t i = 0; i < gold.size(); ++i) hits += gold[i] == pred[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

std::string report(std::span<const ReportRow> rows) {
  std::vector<std::string> datasets;
  for (const auto& row : rows) {
    for (const auto& d : row.datasets) {
      bool seen = false;
      for (const auto& name : datasets) seen = seen || name == d.dataset;
      if (!seen) datasets.push_back(d.dataset);
    }
  }
  auto percent = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return std::string(buf);
  };
  std::string out = "Model";
  std::string rule = "---";
  for (const auto& name : datasets) {
    out += " | " + name + " Slot (F1) | " + name + " Intent (Acc)";
    rule += " | --- | ---";
  }
  out += "\n" + rule + "\n";
  for (const auto& row : rows) {
    out += row.model;
    for (const auto& name : datasets) {
      const DatasetMetrics* m = nullptr;
      for (const auto& d : row.datasets) {
        if (d.dataset == name) m = &d;
      }
      if (m) {
        out += " | " + percent(m->slot_f1) + " | " + percent(m->intent_accuracy);
      } else {
        out += " | -- | --";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace sluj

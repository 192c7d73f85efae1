#include "mclp/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "mclp/error.hpp"
#include "mclp/objectives.hpp"
#include "mclp/optim.hpp"
#include "mclp/patch.hpp"
#include "mclp/rng.hpp"
#include "mclp/tensor_io.hpp"

namespace mclp {

namespace {

std::vector<int> label_set_of(int label, TaskKind kind) {
  if (label < 0) throw InputError("probe: negative label");
  if (kind == TaskKind::multi_class) return {label};
  std::vector<int> set;
  for (int b = 0; (1 << b) <= label; ++b)
    if (label & (1 << b)) set.push_back(b);
  return set;
}

bool has_label(const std::vector<int>& set, int c) {
  return std::find(set.begin(), set.end(), c) != set.end();
}

std::int64_t argmax_row(const Tensor& scores, std::int64_t row) {
  std::int64_t best = 0;
  for (std::int64_t k = 1; k < scores.dim(1); ++k)
    if (scores.at(row, k) > scores.at(row, best)) best = k;
  return best;
}

}  // namespace

int EmbeddingTable::label_count() const {
  int top = -1;
  for (const auto& set : labels)
    for (const int l : set) top = std::max(top, l);
  return top + 1;
}

std::vector<std::int64_t> EmbeddingTable::rows_of_split(
    const std::string& split) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) out.push_back(static_cast<std::int64_t>(i));
  return out;
}

std::vector<double> clip_embedding(const EncoderParams& enc,
                                   const AudioClip& clip,
                                   const ExtractConfig& cfg) {
  const std::int64_t chunk_len =
      std::llround(cfg.crop_seconds * cfg.mel.sample_rate);
  if (chunk_len <= 0)
    throw ConfigError("clip_embedding: non-positive chunk length");
  const auto total = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t full_chunks = total / chunk_len;

  const int d = enc.cfg.embed_dim;
  std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
  const auto add_chunk = [&](std::int64_t begin, std::int64_t len) {
    AudioClip part;
    part.sample_rate = clip.sample_rate;
    part.samples.assign(clip.samples.begin() + begin,
                        clip.samples.begin() + begin + len);
    PatchBatch batch = patchify(compute_log_mel(part, cfg.mel));
    Tensor z = encode(enc, embed_patches(enc, batch));
    const auto& v = z.data();
    const std::int64_t n = z.dim(0);
    std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k)
        pooled[static_cast<std::size_t>(k)] +=
            v[static_cast<std::size_t>(i * d + k)];
    for (int k = 0; k < d; ++k)
      acc[static_cast<std::size_t>(k)] +=
          pooled[static_cast<std::size_t>(k)] / static_cast<double>(n);
  };

  // A clip shorter than one chunk is embedded whole; a longer one is cut
  // into full chunks and the trailing remainder is dropped.
  if (full_chunks == 0) {
    add_chunk(0, total);
    return acc;
  }
  for (std::int64_t c = 0; c < full_chunks; ++c)
    add_chunk(c * chunk_len, chunk_len);
  for (auto& v : acc) v /= static_cast<double>(full_chunks);
  return acc;
}

EmbeddingTable extract_embeddings(const EncoderParams& enc,
                                  const ClipStore& store,
                                  const ExtractConfig& cfg) {
  EmbeddingTable t;
  t.kind = cfg.kind;
  std::vector<double> flat;
  const int d = enc.cfg.embed_dim;
  for (std::int64_t i = 0; i < store.size(); ++i) {
    const ClipRef& ref = store.info(i);
    std::vector<double> vec;
    try {
      vec = clip_embedding(enc, store.load(i), cfg);
    } catch (const InputError& e) {
      t.warnings.push_back(ref.name + ": " + e.what());
      continue;
    }
    flat.insert(flat.end(), vec.begin(), vec.end());
    t.names.push_back(ref.name);
    t.splits.push_back(ref.split);
    t.labels.push_back(label_set_of(ref.label, cfg.kind));
  }
  const auto n = static_cast<std::int64_t>(t.names.size());
  if (n > 0) t.rows = Tensor::from_data({n, d}, std::move(flat));
  return t;
}

void carve_validation(EmbeddingTable& table, int every_k) {
  if (every_k < 2)
    throw ConfigError("carve_validation: interval must be at least 2");
  std::int64_t seen = 0;
  for (auto& split : table.splits) {
    if (split != "train") continue;
    if (seen % every_k == every_k - 1) split = "val";
    seen += 1;
  }
}

double accuracy_of(const Tensor& scores,
                   const std::vector<std::vector<int>>& labels) {
  const std::int64_t m = scores.dim(0);
  if (m == 0) throw InputError("accuracy: no rows to score");
  if (static_cast<std::int64_t>(labels.size()) != m)
    throw ShapeError("accuracy: " + std::to_string(labels.size()) +
                     " label rows for " + std::to_string(m) + " score rows");
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    const auto& set = labels[static_cast<std::size_t>(i)];
    if (set.size() != 1)
      throw InputError("accuracy: row " + std::to_string(i) +
                       " does not have exactly one label");
    if (argmax_row(scores, i) == set[0]) correct += 1;
  }
  return static_cast<double>(correct) / static_cast<double>(m);
}

double mean_average_precision(const Tensor& scores,
                              const std::vector<std::vector<int>>& labels,
                              std::vector<double>* per_class) {
  const std::int64_t m = scores.dim(0);
  const std::int64_t k = scores.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != m)
    throw ShapeError("mean_average_precision: " +
                     std::to_string(labels.size()) + " label rows for " +
                     std::to_string(m) + " score rows");
  if (per_class) per_class->assign(static_cast<std::size_t>(k), -1.0);

  double sum = 0.0;
  int evaluated = 0;
  std::vector<std::int64_t> order(static_cast<std::size_t>(m));
  for (std::int64_t c = 0; c < k; ++c) {
    std::int64_t positives = 0;
    for (const auto& set : labels)
      if (has_label(set, static_cast<int>(c))) positives += 1;
    if (positives == 0) continue;

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int64_t a, std::int64_t b) {
                       return scores.at(a, c) > scores.at(b, c);
                     });
    std::int64_t hits = 0;
    double ap = 0.0;
    for (std::int64_t rank = 1; rank <= m; ++rank) {
      const std::int64_t row = order[static_cast<std::size_t>(rank - 1)];
      if (!has_label(labels[static_cast<std::size_t>(row)],
                     static_cast<int>(c)))
        continue;
      hits += 1;
      ap += static_cast<double>(hits) / static_cast<double>(rank);
    }
    ap /= static_cast<double>(positives);
    if (per_class) (*per_class)[static_cast<std::size_t>(c)] = ap;
    sum += ap;
    evaluated += 1;
  }
  if (evaluated == 0)
    throw InputError("mean_average_precision: no class has a positive");
  return sum / static_cast<double>(evaluated);
}

ProbeModel train_probe(const EmbeddingTable& table, const ProbeConfig& cfg) {
  if (cfg.lr <= 0.0 || cfg.batch <= 0 || cfg.max_epochs <= 0 ||
      cfg.patience <= 0)
    throw ConfigError("train_probe: non-positive setting");
  if (table.count() == 0) throw InputError("train_probe: empty table");

  const int inferred = table.label_count();
  const int classes = cfg.classes > 0 ? cfg.classes : inferred;
  if (classes < 2) throw InputError("train_probe: fewer than two classes");
  if (inferred > classes)
    throw InputError("train_probe: labels exceed the configured classes");

  const auto train_rows = table.rows_of_split("train");
  const auto val_rows = table.rows_of_split("val");
  const auto test_rows = table.rows_of_split("test");
  if (train_rows.empty()) throw InputError("train_probe: empty train split");
  if (val_rows.empty()) throw InputError("train_probe: empty val split");
  if (test_rows.empty()) throw InputError("train_probe: empty test split");

  const std::int64_t n = table.count();
  const std::int64_t d = table.rows.dim(1);
  const bool multi = table.kind == TaskKind::multi_label;

  std::vector<double> hot(static_cast<std::size_t>(n * classes), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& set = table.labels[static_cast<std::size_t>(i)];
    if (!multi && set.size() != 1)
      throw InputError("train_probe: row " + std::to_string(i) +
                       " needs exactly one label for a single-label task");
    for (const int l : set)
      hot[static_cast<std::size_t>(i * classes + l)] = 1.0;
  }
  Tensor targets = Tensor::from_data({n, classes}, std::move(hot));

  ProbeModel model;
  model.w = Tensor::zeros({d, classes}, true);
  model.b = Tensor::zeros({classes}, true);
  ParamMap params;
  params.insert("probe.w", model.w);
  params.insert("probe.b", model.b);
  AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  OptimizerState opt = make_optimizer(params, oc);

  const auto split_loss = [&](const std::vector<std::int64_t>& idx) {
    Tensor x = gather_rows(table.rows, idx);
    Tensor y = gather_rows(targets, idx);
    Tensor logits = add_rowwise(matmul(x, model.w), model.b);
    if (!multi) return classification_loss(y, softmax_rows(logits));
    // Per-class binary cross entropy, summed over classes, mean over rows.
    Tensor p = sigmoid(logits);
    Tensor one = Tensor::full(y.shape(), 1.0);
    Tensor on = mul(y, log_clamped(p, 1e-12));
    Tensor off = mul(sub(one, y), log_clamped(sub(one, p), 1e-12));
    return neg(mean_all(row_sums(add(on, off))));
  };

  const auto batch_size = std::min<std::int64_t>(
      cfg.batch, static_cast<std::int64_t>(train_rows.size()));
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_w, best_b;
  int best_epoch = 0;
  int stale = 0;
  int epochs_run = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    epochs_run = epoch + 1;
    std::vector<std::int64_t> order = train_rows;
    Rng rng(derive_seed(cfg.seed, "probe_epoch",
                        static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size();
         at += static_cast<std::size_t>(batch_size)) {
      const auto end =
          std::min(order.size(), at + static_cast<std::size_t>(batch_size));
      std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      model.w.zero_grad();
      model.b.zero_grad();
      backward(split_loss(idx));
      adamw_step(params, opt);
    }
    const double val_loss = split_loss(val_rows).item();
    if (val_loss < best_val) {
      best_val = val_loss;
      best_w = model.w.data();
      best_b = model.b.data();
      best_epoch = epoch;
      stale = 0;
    } else {
      stale += 1;
      if (stale >= cfg.patience) break;
    }
  }

  model.w.raw_data() = best_w;
  model.b.raw_data() = best_b;

  Tensor test_scores = add_rowwise(
      matmul(gather_rows(table.rows, test_rows), model.w), model.b);
  std::vector<std::vector<int>> test_labels;
  test_labels.reserve(test_rows.size());
  for (const auto r : test_rows)
    test_labels.push_back(table.labels[static_cast<std::size_t>(r)]);

  ProbeResult& res = model.result;
  res.best_epoch = best_epoch;
  res.epochs_run = epochs_run;
  if (multi) {
    res.metric = "map";
    res.value = mean_average_precision(test_scores, test_labels,
                                       &res.per_class);
  } else {
    res.metric = "accuracy";
    res.value = accuracy_of(test_scores, test_labels);
    res.per_class.assign(static_cast<std::size_t>(classes), -1.0);
    std::vector<std::int64_t> seen(static_cast<std::size_t>(classes), 0);
    std::vector<std::int64_t> right(static_cast<std::size_t>(classes), 0);
    for (std::int64_t i = 0;
         i < static_cast<std::int64_t>(test_labels.size()); ++i) {
      const int l = test_labels[static_cast<std::size_t>(i)][0];
      seen[static_cast<std::size_t>(l)] += 1;
      if (argmax_row(test_scores, i) == l)
        right[static_cast<std::size_t>(l)] += 1;
    }
    for (int c = 0; c < classes; ++c)
      if (seen[static_cast<std::size_t>(c)] > 0)
        res.per_class[static_cast<std::size_t>(c)] =
            static_cast<double>(right[static_cast<std::size_t>(c)]) /
            static_cast<double>(seen[static_cast<std::size_t>(c)]);
  }
  return model;
}

void write_embedding_table(const std::string& base, const EmbeddingTable& t) {
  if (t.count() == 0)
    throw UsageError("write_embedding_table: empty table");
  for (const auto& name : t.names)
    if (name.find(',') != std::string::npos ||
        name.find('\n') != std::string::npos)
      throw UsageError("write_embedding_table: name \"" + name +
                       "\" would corrupt the sidecar");

  NamedTensors records;
  records.emplace_back("rows", t.rows);
  records.emplace_back(
      "kind", Tensor::from_data(
                  {1}, {t.kind == TaskKind::multi_label ? 1.0 : 0.0}));
  write_tensor_file(base + ".mclt", records, kTensorFileV2F64);

  std::ofstream csv(base + ".csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + base + ".csv");
  csv << "name,split,labels\n";
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    csv << t.names[i] << "," << t.splits[i] << ",";
    const auto& set = t.labels[i];
    for (std::size_t j = 0; j < set.size(); ++j) {
      if (j) csv << "|";
      csv << set[j];
    }
    csv << "\n";
  }
}

EmbeddingTable read_embedding_table(const std::string& base) {
  EmbeddingTable t;
  for (const auto& [name, tensor] : read_tensor_file(base + ".mclt")) {
    if (name == "rows") t.rows = tensor;
    if (name == "kind")
      t.kind = tensor.item() != 0.0 ? TaskKind::multi_label
                                    : TaskKind::multi_class;
  }
  if (!t.rows.defined() || t.rows.rank() != 2)
    throw IoError(base + ".mclt: missing embedding rows");

  std::ifstream csv(base + ".csv", std::ios::binary);
  if (!csv) throw IoError("cannot read " + base + ".csv");
  std::string line;
  if (!std::getline(csv, line) || line != "name,split,labels")
    throw IoError(base + ".csv: bad header");
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto p1 = line.find(',');
    const auto p2 = line.find(',', p1 == std::string::npos ? 0 : p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw IoError(base + ".csv: malformed line \"" + line + "\"");
    t.names.push_back(line.substr(0, p1));
    t.splits.push_back(line.substr(p1 + 1, p2 - p1 - 1));
    std::vector<int> set;
    std::string rest = line.substr(p2 + 1);
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, '|')) {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 0)
        throw IoError(base + ".csv: bad label \"" + item + "\"");
      set.push_back(v);
    }
    t.labels.push_back(std::move(set));
  }
  if (static_cast<std::int64_t>(t.names.size()) != t.rows.dim(0))
    throw IoError(base + ".csv: row count does not match the tensor file");
  return t;
}

}  // namespace mclp

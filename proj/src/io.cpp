#include "cfsg/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace cfsg {

json hierarchy_to_json(const HierarchySpec& h) {
  return json{{"class_counts", h.class_counts()}, {"parent_maps", h.parent_maps()}};
}

HierarchySpec hierarchy_from_json(const json& j) {
  try {
    return HierarchySpec(j.at("class_counts").get<std::vector<Index>>(),
                         j.at("parent_maps").get<std::vector<std::vector<Index>>>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("hierarchy document: ") + e.what());
  }
}

json dataset_to_json(const Dataset& d) {
  json samples = json::array();
  for (Index i = 0; i < d.size(); ++i) {
    std::vector<double> x(static_cast<std::size_t>(d.features.cols()));
    for (Index c = 0; c < d.features.cols(); ++c) x[static_cast<std::size_t>(c)] = d.features(i, c);
    std::vector<Index> labels;
    for (Index g = 0; g < d.labels.cols(); ++g) labels.push_back(d.labels(i, g));
    samples.push_back(json{{"x", x}, {"labels", labels}});
  }
  return json{{"domain", to_string(d.domain)}, {"hierarchy", hierarchy_to_json(d.hierarchy)}, {"samples", samples}};
}

Dataset dataset_from_json(const json& j) {
  Dataset d;
  try {
    d.hierarchy = hierarchy_from_json(j.at("hierarchy"));
    d.domain = j.contains("domain") ? domain_from_string(j.at("domain").get<std::string>()) : Domain::kSource;
    const auto& samples = j.at("samples");
    const auto n = static_cast<Index>(samples.size());
    if (n == 0) throw ValidationError("dataset: no samples");
    const auto width = static_cast<Index>(samples.front().at("x").size());
    d.features.resize(n, width);
    d.labels.resize(n, d.hierarchy.levels());
    for (Index i = 0; i < n; ++i) {
      const auto& s = samples[static_cast<std::size_t>(i)];
      const auto x = s.at("x").get<std::vector<double>>();
      auto labels = s.at("labels").get<std::vector<Index>>();
      if (static_cast<Index>(x.size()) != width) {
        throw ValidationError("dataset: sample " + std::to_string(i) + " has a different width");
      }
      if (labels.size() == 1) labels = label_vector(d.hierarchy, labels.front());
      if (static_cast<Index>(labels.size()) != d.hierarchy.levels()) {
        throw ValidationError("dataset: sample " + std::to_string(i) + " label vector length != levels");
      }
      for (Index c = 0; c < width; ++c) d.features(i, c) = x[static_cast<std::size_t>(c)];
      for (Index g = 0; g < d.hierarchy.levels(); ++g) d.labels(i, g) = labels[static_cast<std::size_t>(g)];
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dataset document: ") + e.what());
  }
  d.validate();
  return d;
}

json partition_to_json(const PartitionSpec& p) {
  return json{{"d", p.d}, {"d_c", p.d_c}, {"d_p", p.d_p}, {"d_n", p.d_n}};
}

PartitionSpec partition_from_json(const json& j) {
  PartitionSpec p{j.at("d").get<Index>(), j.at("d_c").get<Index>(), j.at("d_p").get<Index>(),
                  j.at("d_n").get<Index>()};
  p.validate();
  return p;
}

json tensor_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix tensor_from_json(const json& j, const std::string& name) {
  try {
    const auto shape = j.at("shape").get<std::vector<Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
        static_cast<std::size_t>(shape[0] * shape[1]) != data.size()) {
      throw LoadError("tensor '" + name + "': shape does not match data length");
    }
    Matrix m(shape[0], shape[1]);
    for (Index r = 0; r < shape[0]; ++r) {
      for (Index c = 0; c < shape[1]; ++c) m(r, c) = data[static_cast<std::size_t>(r * shape[1] + c)];
    }
    if (!m.allFinite()) throw LoadError("tensor '" + name + "': non-finite entries");
    return m;
  } catch (const json::exception& e) {
    throw LoadError("tensor '" + name + "': " + e.what());
  }
}

namespace {

json architecture_to_json(const Architecture& a) {
  return json{{"input_dim", a.input_dim}, {"hidden", a.hidden},   {"channels", a.channels},
              {"positions", a.positions}, {"ratio", a.ratio},     {"dual_backbone", a.dual_backbone}};
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Architecture architecture_from_json(const json& j) {
  reject_unknown(j, {"input_dim", "hidden", "channels", "positions", "ratio", "dual_backbone"}, "architecture");
  Architecture a;
  read_opt(j, "input_dim", a.input_dim);
  read_opt(j, "hidden", a.hidden);
  read_opt(j, "channels", a.channels);
  read_opt(j, "positions", a.positions);
  read_opt(j, "ratio", a.ratio);
  read_opt(j, "dual_backbone", a.dual_backbone);
  return a;
}

}  // namespace

json config_to_json(const TrainConfig& c) {
  return json{{"schema", kConfigSchema},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"eps_fuse", c.coeffs.eps_fuse},
              {"lambda_cs", c.coeffs.lambda_cs},
              {"lambda_cd", c.coeffs.lambda_cd},
              {"lambda_sp", c.coeffs.lambda_sp},
              {"enable_fs", c.toggles.enable_fs},
              {"enable_cs", c.toggles.enable_cs},
              {"learnable_lam", c.learnable_lam},
              {"subcentroid_bank", c.subcentroid_bank},
              {"mu", c.mu},
              {"architecture", architecture_to_json(c.arch)}};
}

TrainConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"schema", "epochs", "batch_size", "learning_rate", "momentum", "weight_decay", "seed", "eps_fuse",
                  "lambda_cs", "lambda_cd", "lambda_sp", "enable_fs", "enable_cs", "learnable_lam",
                  "subcentroid_bank", "mu", "architecture"},
                 "config");
  if (!j.contains("schema") || j.at("schema") != kConfigSchema) {
    throw ValidationError("config: schema must be " + std::to_string(kConfigSchema));
  }
  TrainConfig c;
  try {
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "learning_rate", c.learning_rate);
    read_opt(j, "momentum", c.momentum);
    read_opt(j, "weight_decay", c.weight_decay);
    read_opt(j, "seed", c.seed);
    read_opt(j, "eps_fuse", c.coeffs.eps_fuse);
    read_opt(j, "lambda_cs", c.coeffs.lambda_cs);
    read_opt(j, "lambda_cd", c.coeffs.lambda_cd);
    read_opt(j, "lambda_sp", c.coeffs.lambda_sp);
    read_opt(j, "enable_fs", c.toggles.enable_fs);
    read_opt(j, "enable_cs", c.toggles.enable_cs);
    read_opt(j, "learnable_lam", c.learnable_lam);
    read_opt(j, "subcentroid_bank", c.subcentroid_bank);
    read_opt(j, "mu", c.mu);
    if (j.contains("architecture")) c.arch = architecture_from_json(j.at("architecture"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  Network net = ckpt.net;
  json tensors = json::object();
  for (const auto& [name, m] : all_tensors(net)) tensors[name] = tensor_to_json(*m);
  json bank = nullptr;
  if (ckpt.bank) {
    json levels = json::array();
    for (Index g = 0; g < ckpt.bank->levels(); ++g) {
      json classes = json::array();
      for (Index k = 0; k < ckpt.bank->classes(g); ++k) {
        if (!ckpt.bank->initialized(g, k)) {
          classes.push_back(nullptr);
          continue;
        }
        const auto& c = ckpt.bank->centroid(g, k);
        json entry = json::object();
        for (Part p : kAllParts) {
          entry[to_string(p)] = std::vector<double>(c.part(p).data(), c.part(p).data() + c.part(p).size());
        }
        classes.push_back(entry);
      }
      levels.push_back(classes);
    }
    bank = json{{"momentum", ckpt.bank->momentum()}, {"levels", levels}};
  }
  return json{{"schema", kCheckpointSchema},
              {"partition", partition_to_json(ckpt.net.partition)},
              {"hierarchy", hierarchy_to_json(ckpt.net.hierarchy)},
              {"config", config_to_json(ckpt.config)},
              {"tensors", tensors},
              {"bank", bank},
              {"step", ckpt.step},
              {"seed", ckpt.seed}};
}

Checkpoint checkpoint_from_json(const json& j) {
  auto field = [&](const char* key) -> const json& {
    if (!j.is_object() || !j.contains(key)) throw LoadError(std::string("checkpoint: missing field '") + key + "'");
    return j.at(key);
  };
  if (field("schema") != kCheckpointSchema) {
    throw LoadError("checkpoint: field 'schema' has unsupported version " + field("schema").dump());
  }
  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(field("config"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("checkpoint: field 'config': ") + e.what());
  }
  HierarchySpec h;
  try {
    h = hierarchy_from_json(field("hierarchy"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("checkpoint: field 'hierarchy': ") + e.what());
  }
  PartitionSpec partition;
  try {
    partition = partition_from_json(field("partition"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("checkpoint: field 'partition': ") + e.what());
  }
  ckpt.net = init_network(ckpt.config.arch, h, ckpt.config.learnable_lam, 0);
  if (!(ckpt.net.partition == partition)) throw LoadError("checkpoint: field 'partition' disagrees with architecture");
  const json& tensors = field("tensors");
  auto slots = all_tensors(ckpt.net);
  for (auto& [name, m] : slots) {
    if (!tensors.contains(name)) throw LoadError("checkpoint: missing tensor '" + name + "'");
    Matrix loaded = tensor_from_json(tensors.at(name), name);
    if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
      throw LoadError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
    *m = std::move(loaded);
  }
  if (tensors.size() != slots.size()) throw LoadError("checkpoint: field 'tensors' has unexpected extra tensors");
  const json& bank = field("bank");
  if (!bank.is_null()) {
    try {
      SubCentroidBank b(h.class_counts(), partition, bank.at("momentum").get<double>());
      const auto& levels = bank.at("levels");
      if (static_cast<Index>(levels.size()) != h.levels()) throw LoadError("checkpoint: field 'bank' level count");
      for (Index g = 0; g < h.levels(); ++g) {
        const auto& classes = levels.at(static_cast<std::size_t>(g));
        if (static_cast<Index>(classes.size()) != h.class_count(g)) {
          throw LoadError("checkpoint: field 'bank' class count at level " + std::to_string(g));
        }
        for (Index k = 0; k < h.class_count(g); ++k) {
          const auto& entry = classes.at(static_cast<std::size_t>(k));
          if (entry.is_null()) continue;
          PartCentroids c;
          for (Part p : kAllParts) {
            const auto v = entry.at(to_string(p)).get<std::vector<double>>();
            c.part(p) = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
          }
          b.set(g, k, std::move(c));
        }
      }
      ckpt.bank = std::move(b);
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(std::string("checkpoint: field 'bank': ") + e.what());
    }
  }
  try {
    ckpt.step = field("step").get<std::uint64_t>();
    ckpt.seed = field("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint: step/seed: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_json(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw LoadError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_file_atomic(path, j.dump(1) + "\n"); }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace cfsg

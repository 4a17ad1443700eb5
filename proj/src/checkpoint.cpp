#include "cqcd/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "cqcd/error.hpp"

namespace cqcd::restoration {

namespace {

constexpr char kMagic[8] = {'C', 'Q', 'C', 'D', 'C', 'K', 'P', '1'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string what) : in_(in), what_(std::move(what)) {}
  template <class T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  std::vector<double> doubles() {
    const auto n = checked_size(sizeof(double));
    std::vector<double> v(n);
    read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
    return v;
  }
  std::string text() {
    const auto n = checked_size(1);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  std::size_t checked_size(std::size_t elem) {
    const auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 40) / elem) throw FormatError(what_ + ": corrupt length field");
    return static_cast<std::size_t>(n);
  }
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(what_ + ": truncated checkpoint");
  }
  std::ifstream& in_;
  std::string what_;
};

}  // namespace

Checkpoint make_checkpoint(const RestorationState& s, const Problem& problem) {
  Checkpoint c;
  c.config = s.config;
  c.frames = static_cast<int>(problem.frames.size());
  c.height = problem.height();
  c.width = problem.width();
  c.channels = problem.channels();
  c.epoch = s.epoch;
  c.stopped_early = s.stopped_early;
  c.nonconverged_epochs = s.nonconverged_epochs;
  c.estimator_params = s.estimator.parameters();
  c.remover_params = s.remover.parameters();
  c.running_stats = s.remover.running_statistics();
  c.rms_square_avg = s.estimator_optimizer.square_avg();
  c.adam_m = s.remover_optimizer.first_moment();
  c.adam_v = s.remover_optimizer.second_moment();
  c.adam_steps = s.remover_optimizer.steps();
  c.history = s.history;
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.text(config_to_json(c.config));
  for (int v : {c.frames, c.height, c.width, c.channels, c.epoch}) w.pod<std::int32_t>(v);
  w.pod<std::uint8_t>(c.stopped_early ? 1 : 0);
  w.pod<std::int32_t>(c.nonconverged_epochs);
  for (const auto* v : {&c.estimator_params, &c.remover_params, &c.running_stats, &c.rms_square_avg, &c.adam_m,
                        &c.adam_v})
    w.doubles(*v);
  w.pod<std::int64_t>(c.adam_steps);
  w.pod<std::uint64_t>(c.history.size());
  for (const auto& l : c.history)
    for (double v : {l.rec, l.dist, l.bc, l.de, l.br}) w.pod<double>(v);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(path.string() + ": not a checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config = config_from_json(r.text());
  for (int* v : {&c.frames, &c.height, &c.width, &c.channels, &c.epoch}) *v = r.pod<std::int32_t>();
  c.stopped_early = r.pod<std::uint8_t>() != 0;
  c.nonconverged_epochs = r.pod<std::int32_t>();
  for (auto* v : {&c.estimator_params, &c.remover_params, &c.running_stats, &c.rms_square_avg, &c.adam_m, &c.adam_v})
    *v = r.doubles();
  c.adam_steps = r.pod<std::int64_t>();
  const auto n = r.pod<std::uint64_t>();
  if (n > 100'000'000) throw FormatError(path.string() + ": corrupt history length");
  c.history.resize(n);
  for (auto& l : c.history)
    for (double* v : {&l.rec, &l.dist, &l.bc, &l.de, &l.br}) *v = r.pod<double>();
  return c;
}

RestorationState restore_state(const Checkpoint& c, const Problem& problem) {
  if (c.frames != static_cast<int>(problem.frames.size()) || c.height != problem.height() ||
      c.width != problem.width() || c.channels != problem.channels())
    throw DimensionError("checkpoint does not match the input frames");
  RestorationState s = initialize(c.config, problem);
  auto assign = [](std::vector<double>& dst, const std::vector<double>& src, const char* what) {
    if (dst.size() != src.size()) throw DimensionError(std::string("checkpoint: size mismatch in ") + what);
    dst = src;
  };
  assign(s.estimator.parameters(), c.estimator_params, "estimator parameters");
  assign(s.remover.parameters(), c.remover_params, "remover parameters");
  assign(s.remover.running_statistics(), c.running_stats, "normalization statistics");
  assign(s.estimator_optimizer.square_avg(), c.rms_square_avg, "estimator optimizer");
  assign(s.remover_optimizer.first_moment(), c.adam_m, "remover optimizer");
  assign(s.remover_optimizer.second_moment(), c.adam_v, "remover optimizer");
  s.remover_optimizer.set_steps(c.adam_steps);
  s.epoch = c.epoch;
  s.stopped_early = c.stopped_early;
  s.nonconverged_epochs = c.nonconverged_epochs;
  s.history = c.history;
  return s;
}

void write_losses_csv(const std::vector<LossBreakdown>& history, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot write " + path.string());
  std::fprintf(f, "epoch,l_rec,l_dist,l_bc,l_de,l_br\n");
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& l = history[e];
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, l.rec, l.dist, l.bc, l.de, l.br);
  }
  if (std::fclose(f) != 0) throw IoError("failed writing " + path.string());
}

}  // namespace cqcd::restoration

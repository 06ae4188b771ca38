// Viewer: fetch, verify and decrypt recordings with an owner or delegatee grant.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "cactus/error.hpp"
#include "cactus/viewer.hpp"
#include "common.hpp"

using namespace cactus;

namespace {

std::atomic<bool> stop_requested{ false };

extern "C" void on_signal(int)
{
  stop_requested = true;
}

class Sink
{
public:
  explicit Sink(std::string out)
    : dir_(std::move(out))
  {
    if (dir_ != "-")
      std::filesystem::create_directories(dir_);
  }

  // Stdout stream record: t_ms u64 || length u32 || payload, big-endian.
  void write(const viewer::DeliveredFrame& f)
  {
    if (dir_ == "-") {
      Writer w;
      w.u64(f.t_ms).bytes32(f.payload);
      auto rec = w.take();
      std::fwrite(rec.data(), 1, rec.size(), stdout);
      std::fflush(stdout);
      return;
    }
    auto path = std::filesystem::path(dir_) / (std::to_string(f.t_ms) + ".frame");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(f.payload.data()), static_cast<std::streamsize>(f.payload.size()));
    if (!out)
      throw Error(ErrorCode::Io, "cannot write " + path.string());
  }

private:
  std::string dir_;
};

struct Tally
{
  uint64_t delivered = 0;
  uint64_t blocks = 0;
  uint64_t rejected_blocks = 0;
  uint64_t failed_frames = 0;
  std::set<uint64_t> unauthorized_epochs;
  uint64_t unauthorized_frames = 0;
  std::vector<double> latency_ms;
};

std::string epoch_ranges(const std::set<uint64_t>& epochs)
{
  std::string out;
  auto it = epochs.begin();
  while (it != epochs.end()) {
    uint64_t first = *it;
    uint64_t last = first;
    while (++it != epochs.end() && *it == last + 1)
      last = *it;
    if (!out.empty())
      out += ", ";
    out += first == last ? std::to_string(first) : std::to_string(first) + "-" + std::to_string(last);
  }
  return out;
}

void consume(const std::vector<viewer::BlockReport>& reports,
             const keytree::TreeParams& params,
             uint64_t from_ms,
             uint64_t to_ms,
             bool follow,
             Sink& sink,
             Tally& tally)
{
  for (const auto& r : reports) {
    ++tally.blocks;
    std::string where = "block " + std::to_string(r.key.first_epoch) + "/" + std::to_string(r.key.sequence);
    if (r.error) {
      ++tally.rejected_blocks;
      std::cerr << where << ": " << to_string(*r.error) << ": " << r.reason << "\n";
      continue;
    }
    for (const auto& [t, code] : r.failed_frames) {
      ++tally.failed_frames;
      std::cerr << where << ": frame " << t << ": " << to_string(code) << "\n";
    }
    for (uint64_t t : r.unauthorized) {
      if (t < from_ms || t >= to_ms)
        continue;
      ++tally.unauthorized_frames;
      tally.unauthorized_epochs.insert(keytree::epoch_of(t, params));
    }
    for (const auto& f : r.frames) {
      if (f.t_ms < from_ms || f.t_ms >= to_ms)
        continue;
      sink.write(f);
      ++tally.delivered;
      if (follow)
        tally.latency_ms.push_back(static_cast<double>(admin::system_clock_ms()) - static_cast<double>(f.t_ms));
    }
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Fetch, verify and decrypt camera recordings" };
  std::string grant_path;
  std::string storage_url;
  std::string from;
  std::string to;
  bool follow = false;
  double duration_s = 0;
  int poll_ms = 200;
  std::string out;
  app.add_option("--grant", grant_path, "Grant file from admin grant or admin delegate")->required();
  app.add_option("--storage", storage_url, "Storage service URL")->required();
  app.add_option("--from", from, "Start, RFC 3339 or @<unix ms> (default: tree origin)");
  app.add_option("--to", to, "End (exclusive), RFC 3339 or @<unix ms> (default: now, or unbounded with --follow)");
  app.add_flag("--follow", follow, "Keep polling for new blocks and report end-to-end latency");
  app.add_option("--duration", duration_s, "Stop following after this many seconds");
  app.add_option("--poll-ms", poll_ms, "Polling interval when following")->capture_default_str();
  app.add_option("--out", out, "Directory for <t_ms>.frame files, or - for a stream on stdout")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    auto grant = admin::Grant::parse(cli::read_file(grant_path));
    auto store = std::make_shared<storage::HttpStore>(storage_url);
    viewer::Playback playback(std::move(grant), store);
    const auto params = playback.params();
    uint64_t span = uint64_t{ params.epoch_seconds } * 1000;
    uint64_t tree_end = params.t0_ms + params.leaf_count() * span;
    uint64_t from_ms = from.empty() ? params.t0_ms : cli::parse_time(from);
    uint64_t to_ms = !to.empty() ? cli::parse_time(to) : follow ? tree_end : admin::system_clock_ms() + 1;
    auto range = cli::epochs_between(from_ms, to_ms, params);

    Sink sink(out);
    Tally tally;
    if (!follow) {
      consume(playback.fetch(range.start, range.end), params, from_ms, to_ms, false, sink, tally);
    } else {
      struct sigaction sa{};
      sa.sa_handler = on_signal;
      ::sigaction(SIGINT, &sa, nullptr);
      ::sigaction(SIGTERM, &sa, nullptr);
      auto started = std::chrono::steady_clock::now();
      while (!stop_requested) {
        uint64_t now = admin::system_clock_ms();
        uint64_t since = playback.last_delivered() ? *playback.last_delivered() + 1 : 0;
        uint64_t lo = since ? std::max(range.start, keytree::epoch_of(since - 1, params)) : range.start;
        uint64_t hi = now < params.t0_ms ? range.start : std::min(range.end, keytree::epoch_of(std::min(now, tree_end - 1), params) + 1);
        if (hi > lo)
          consume(playback.fetch(lo, hi, since), params, from_ms, to_ms, true, sink, tally);
        if (now >= to_ms)
          break;
        if (duration_s > 0 && std::chrono::steady_clock::now() - started >= std::chrono::duration<double>(duration_s))
          break;
        std::this_thread::sleep_for(std::chrono::milliseconds(poll_ms));
      }
    }

    std::cerr << "delivered " << tally.delivered << " frames from " << tally.blocks << " blocks; " << tally.rejected_blocks
              << " blocks rejected, " << tally.failed_frames << " frames failed verification\n";
    if (tally.unauthorized_frames)
      std::cerr << "unauthorized: " << tally.unauthorized_frames << " frames in epochs " << epoch_ranges(tally.unauthorized_epochs)
                << " (KeyUnavailable)\n";
    if (follow && !tally.latency_ms.empty()) {
      double sum = 0;
      double max = 0;
      for (double v : tally.latency_ms) {
        sum += v;
        max = std::max(max, v);
      }
      double mean = sum / static_cast<double>(tally.latency_ms.size());
      double var = 0;
      for (double v : tally.latency_ms)
        var += (v - mean) * (v - mean);
      double sigma = std::sqrt(var / static_cast<double>(tally.latency_ms.size()));
      char line[160];
      std::snprintf(line, sizeof(line), "latency over %zu frames: mean %.1f ms, sigma %.1f ms, max %.1f ms\n",
                    tally.latency_ms.size(), mean, sigma, max);
      std::cerr << line;
    }
    return tally.rejected_blocks || tally.failed_frames ? 3 : 0;
  } catch (const std::exception& e) {
    return cli::report(e);
  }
}

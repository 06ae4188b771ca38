// Live-stream latency breakdown per pipeline stage.

#include <iostream>

#include <CLI11.hpp>

#include "cactus/bench.hpp"
#include "common.hpp"

using namespace cactus;

int main(int argc, char** argv)
{
  CLI::App app{ "Per-stage live stream timings, camera and viewer side" };
  bench::BenchConfig config;
  std::string content = "random";
  app.add_option("--frames", config.frames, "Frames to stream")->capture_default_str();
  app.add_option("--frame-bytes", config.frame_bytes, "Synthetic frame size")->capture_default_str();
  app.add_option("--fps", config.frame_rate, "Frame rate the timestamps follow")->capture_default_str();
  app.add_option("--depth", config.params.depth, "Key tree depth")->capture_default_str();
  app.add_option("--epoch-seconds", config.params.epoch_seconds, "Epoch length")->capture_default_str();
  app.add_option("--content", content, "Frame content")->check(CLI::IsMember({ "random", "zero", "both" }))->capture_default_str();
  app.add_option("--storage", config.storage_url, "Storage service URL (default: in-process server on loopback)");
  app.add_option("--rtt-ms", config.link.rtt_ms, "Emulated round trip added to every store call");
  app.add_option("--mbit", config.link.mbit_per_s, "Emulated link bandwidth");
  CLI11_PARSE(app, argc, argv);

  try {
    bool first = true;
    for (bool zero : { false, true }) {
      if ((content == "random" && zero) || (content == "zero" && !zero))
        continue;
      config.zero_frames = zero;
      if (!first)
        std::cout << "\n";
      std::cout << bench::bench_run(config).render();
      first = false;
    }
  } catch (const std::exception& e) {
    return cli::report(e);
  }
  return 0;
}

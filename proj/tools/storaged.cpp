// Untrusted blob storage service. Optionally misbehaves on reads.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "cactus/error.hpp"
#include "cactus/storage.hpp"
#include "common.hpp"

using namespace cactus;

int main(int argc, char** argv)
{
  CLI::App app{ "Append-only blob store over HTTP" };
  std::string listen = "127.0.0.1:8750";
  std::string root;
  storage::AdversaryConfig adversary;
  app.add_option("--listen", listen, "host:port; port 0 picks a free one")->capture_default_str();
  app.add_option("--root", root, "Directory to keep blobs in (default: memory only)");
  app.add_option("--tamper-rate", adversary.tamper_rate, "Fraction of served blobs with one flipped bit")->check(CLI::Range(0.0, 1.0));
  app.add_option("--drop-rate", adversary.drop_rate, "Fraction of blobs withheld from listings")->check(CLI::Range(0.0, 1.0));
  app.add_flag("--replay", adversary.replay, "Mix a stale blob into every listing");
  app.add_option("--seed", adversary.seed, "Seed for the misbehavior");
  CLI11_PARSE(app, argc, argv);

  try {
    auto colon = listen.rfind(':');
    if (colon == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "--listen wants host:port");
    std::string host = listen.substr(0, colon);
    int port = std::stoi(listen.substr(colon + 1));

    std::shared_ptr<storage::BlobStore> store;
    if (root.empty())
      store = std::make_shared<storage::MemoryStore>();
    else
      store = std::make_shared<storage::FileStore>(root);
    bool adversarial = adversary.tamper_rate > 0 || adversary.drop_rate > 0 || adversary.replay;
    if (adversarial)
      store = std::make_shared<storage::AdversarialStore>(store, adversary);

    // Block the signals before any thread starts so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    storage::Server server(store);
    int bound = server.bind(host, port);
    server.start();
    std::cout << "listening on http://" << host << ":" << bound << (adversarial ? " (adversarial)" : "") << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  } catch (const std::exception& e) {
    return cli::report(e);
  }
  return 0;
}

// Camera daemon: records, encrypts and uploads; serves the admin socket.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "cactus/camera.hpp"
#include "cactus/error.hpp"
#include "common.hpp"

using namespace cactus;

namespace {

std::atomic<bool> stop_requested{ false };

extern "C" void on_signal(int)
{
  stop_requested = true;
}

void save_camera(const std::string& path, const admin::CameraDevice& device)
{
  auto bytes = device.serialize();
  cli::write_private(path, bytes);
  secure_zero(bytes.data(), bytes.size());
}

int provision(const std::string& path, bool force)
{
  if (std::filesystem::exists(path) && !force)
    throw Error(ErrorCode::InvalidArgument, path + " exists; pass --force to replace it");
  admin::CameraDevice device(DeviceKeys::generate());
  save_camera(path, device);
  std::cout << "factory key fingerprint " << to_hex(device.factory_keys().public_bundle().fingerprint()) << "\n";
  return 0;
}

bool initialized(camera::SharedCamera& cam)
{
  std::lock_guard lock(cam.mutex);
  return cam.device.initialized();
}

int run(const std::string& config_path, bool linger)
{
  auto config = camera::CameraConfig::load(config_path);
  config.state_path = cli::state_path(config.state_path);
  if (config.storage_url.empty())
    throw Error(ErrorCode::InvalidArgument, "config needs storage_url");

  camera::SharedCamera cam{ admin::CameraDevice::parse(cli::read_file(config.state_path)), {}, {} };
  if (!cam.device.initialized())
    throw Error(ErrorCode::NotInitialized, "camera is not paired; run admin pair --role camera first");
  if (config.tree_params && *config.tree_params != cam.device.tree().params())
    throw Error(ErrorCode::InvalidArgument, "config tree parameters differ from the ones chosen at pairing");
  std::string path = config.state_path;
  cam.persist = [path](const admin::CameraDevice& d) { save_camera(path, d); };

  struct sigaction sa{};
  sa.sa_handler = on_signal;
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);

  std::atomic<bool> admin_stop{ false };
  std::thread admin_thread;
  if (!config.admin_socket.empty())
    admin_thread = std::thread([&] {
      try {
        camera::serve_admin(config.admin_socket, cam, admin_stop);
      } catch (const std::exception& e) {
        std::cerr << "admin socket: " << e.what() << "\n";
      }
    });

  auto store = std::make_shared<storage::HttpStore>(config.storage_url);
  camera::Recorder recorder(config, cam, store, [](const std::string& line) { std::cerr << "camd: " << line << "\n"; });
  camera::RecorderStats stats;
  try {
    stats = recorder.run(stop_requested);
  } catch (...) {
    admin_stop = true;
    if (admin_thread.joinable())
      admin_thread.join();
    throw;
  }
  std::cout << "frames " << stats.frames << ", blocks encrypted " << stats.blocks_encrypted << ", uploaded "
            << stats.blocks_uploaded << ", dropped " << stats.blocks_dropped << ", upload retries " << stats.upload_retries
            << ", rotations " << stats.rotations << std::endl;
  while (linger && admin_thread.joinable() && !stop_requested && initialized(cam))
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  admin_stop = true;
  if (admin_thread.joinable())
    admin_thread.join();

  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Camera daemon" };
  app.require_subcommand(0, 1);
  std::string config_path;
  app.add_option("--config", config_path, "Camera config file");
  bool linger = false;
  app.add_flag("--linger", linger, "Keep serving the admin socket after recording ends, until signalled or reset");

  auto* prov = app.add_subcommand("provision", "Create factory keys for a new camera");
  std::string state;
  bool force = false;
  prov->add_option("--state", state, "State file to create (default $CACTUS_STATE)");
  prov->add_flag("--force", force, "Replace an existing state file");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*prov)
      return provision(cli::state_path(state), force);
    if (config_path.empty()) {
      std::cerr << app.help();
      return 2;
    }
    return run(config_path, linger);
  } catch (const std::exception& e) {
    return cli::report(e);
  }
}

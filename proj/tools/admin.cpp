// Owner and delegatee tool: pairing, delegation, deletion, reset, recovery.

#include <iostream>
#include <memory>
#include <utility>

#include <unistd.h>

#include <CLI11.hpp>

#include "cactus/admin.hpp"
#include "cactus/adversary.hpp"
#include "cactus/error.hpp"
#include "cactus/framecrypto.hpp"
#include "common.hpp"

using namespace cactus;

namespace {

// Owns one connected socket.
class Link
{
public:
  explicit Link(int fd = -1)
    : fd(fd)
  {
  }
  Link(Link&& other) noexcept
    : fd(std::exchange(other.fd, -1))
  {
  }
  Link(const Link&) = delete;
  Link& operator=(const Link&) = delete;
  ~Link()
  {
    if (fd >= 0)
      ::close(fd);
  }

  int fd;
};

struct Endpoint
{
  std::string listen;
  std::string connect;
  std::string show;
  std::string scan;
  std::string adversary;
  int wait_s = 30;

  void add_to(CLI::App* cmd)
  {
    auto* l = cmd->add_option("--listen", listen, "Unix socket to wait on for the peer");
    auto* c = cmd->add_option("--connect", connect, "Unix socket of a listening peer");
    l->excludes(c);
    cmd->add_option("--show", show, "File this side displays its key hash in")->required();
    cmd->add_option("--scan", scan, "File holding the peer's displayed key hash")->required();
    cmd->add_option("--adversary", adversary,
                    "Scripted attacker on this end of the channel: substitute-anchor-key, substitute-joiner-key, relay-without-key, reflect");
    cmd->add_option("--wait", wait_s, "Seconds to wait for the peer")->capture_default_str();
  }

  Link open() const
  {
    if (listen.empty() == connect.empty())
      throw Error(ErrorCode::InvalidArgument, "give exactly one of --listen and --connect");
    Link link;
    if (!listen.empty()) {
      int listener = channel::listen_unix(listen, 1);
      try {
        link.fd = channel::accept_one(listener);
      } catch (...) {
        ::close(listener);
        throw;
      }
      ::close(listener);
      ::unlink(listen.c_str());
    } else {
      link.fd = channel::connect_unix(connect, wait_s * 1000);
    }
    return link;
  }

  void run(pairing::Session& session) const
  {
    auto link = open();
    channel::FdChannel ch(link.fd);
    auto mitm = adversary.empty() ? nullptr : pairing::make_scripted_adversary(adversary, session.protocol());
    try {
      pairing::run_over(session, ch, mitm.get());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::PairingAborted && session.abort_step())
        std::cerr << "pairing aborted at step " << *session.abort_step() << "\n";
      throw;
    }
  }
};

struct TimeRange
{
  std::string from;
  std::string to;

  void add_to(CLI::App* cmd, bool required)
  {
    auto* f = cmd->add_option("--from", from, "Start, RFC 3339 or @<unix ms>");
    auto* t = cmd->add_option("--to", to, "End (exclusive), RFC 3339 or @<unix ms>");
    if (required) {
      f->required();
      t->required();
    } else {
      f->needs(t);
      t->needs(f);
    }
  }

  bool given() const { return !from.empty(); }

  keytree::EpochRange epochs(const keytree::TreeParams& params) const
  {
    return cli::epochs_between(cli::parse_time(from), cli::parse_time(to), params);
  }
};

admin::OwnerDevice load_owner(const std::string& path)
{
  auto owner = admin::OwnerDevice::parse(cli::read_file(path));
  if (!owner.paired())
    throw Error(ErrorCode::NotInitialized, "owner state holds no camera; pair or recover first");
  return owner;
}

void save_owner(const std::string& path, const admin::OwnerDevice& owner)
{
  auto bytes = owner.serialize();
  cli::write_private(path, bytes);
  secure_zero(bytes.data(), bytes.size());
}

// One request, one result frame.
void send_request(const std::string& socket, const admin::AdminRequest& request)
{
  Link link{ channel::connect_unix(socket, 5000) };
  channel::FdChannel ch(link.fd);
  ch.send({ static_cast<uint8_t>(admin::Tag::request), request.serialize() });
  auto reply = ch.receive();
  if (!reply)
    throw Error(ErrorCode::Io, "camera closed the admin channel");
  admin::check_result(*reply);
}

std::string describe(const keytree::EpochRange& r, const keytree::TreeParams& params)
{
  return "epochs [" + std::to_string(r.start) + ", " + std::to_string(r.end) + ") = " +
         cli::format_time(keytree::epoch_start_ms(r.start, params)) + " .. " +
         cli::format_time(keytree::epoch_start_ms(r.end, params));
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Owner-side administration of a paired camera" };
  app.require_subcommand(1);
  std::string state;

  // pair
  auto* pair = app.add_subcommand("pair", "Initialization pairing between a new camera and its owner");
  std::string pair_role;
  Endpoint pair_end;
  std::string wifi = "cactus-wifi";
  keytree::TreeParams params;
  std::string t0;
  pair->add_option("--role", pair_role, "camera or owner")->required()->check(CLI::IsMember({ "camera", "owner" }));
  pair->add_option("--state", state, "State file (default $CACTUS_STATE)");
  pair_end.add_to(pair);
  pair->add_option("--wifi", wifi, "Credentials handed to the camera (owner)");
  pair->add_option("--depth", params.depth, "Key tree depth (owner)")->capture_default_str();
  pair->add_option("--epoch-seconds", params.epoch_seconds, "Epoch length (owner)")->capture_default_str();
  pair->add_option("--t0", t0, "Tree origin, RFC 3339 or @<unix ms> (owner, default now)");

  // delegate
  auto* delegate = app.add_subcommand("delegate", "Hand a time window to a delegatee");
  std::string delegate_role;
  Endpoint delegate_end;
  TimeRange delegate_range;
  std::string grant_out;
  delegate->add_option("--role", delegate_role, "owner or delegatee")
    ->default_val("owner")
    ->check(CLI::IsMember({ "owner", "delegatee" }));
  delegate->add_option("--state", state, "Owner state file (default $CACTUS_STATE)");
  delegate_end.add_to(delegate);
  delegate_range.add_to(delegate, false);
  delegate->add_option("--out", grant_out, "Where the delegatee stores the grant");

  // grant
  auto* grant = app.add_subcommand("grant", "Export a viewing grant from owner state");
  TimeRange grant_range;
  grant->add_option("--state", state, "Owner state file (default $CACTUS_STATE)");
  grant_range.add_to(grant, false);
  grant->add_option("--out", grant_out, "Grant file")->required();

  // delete
  auto* del = app.add_subcommand("delete", "Cryptographically delete recordings in a time window");
  TimeRange delete_range;
  std::string camera_socket;
  del->add_option("--state", state, "Owner state file (default $CACTUS_STATE)");
  delete_range.add_to(del, true);
  del->add_option("--camera", camera_socket, "Camera admin socket")->required();

  // reset
  auto* reset = app.add_subcommand("reset", "Factory-reset the camera and forget it");
  reset->add_option("--state", state, "Owner state file (default $CACTUS_STATE)");
  reset->add_option("--camera", camera_socket, "Camera admin socket")->required();

  // recover
  auto* recover = app.add_subcommand("recover", "Rebuild owner state from the camera's escrow");
  std::string passphrase;
  recover->add_option("--state", state, "Owner state file to write (default $CACTUS_STATE)");
  recover->add_option("--camera", camera_socket, "Camera admin socket")->required();
  recover->add_option("--passphrase", passphrase, "Escrow passphrase, 32 hex digits")->required();

  // escrow-show
  auto* show = app.add_subcommand("escrow-show", "Print the public part of the camera's escrow");
  show->add_option("--camera", camera_socket, "Camera admin socket")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pair) {
      auto path = cli::state_path(state);
      if (pair_role == "camera") {
        auto device = admin::CameraDevice::parse(cli::read_file(path));
        if (device.initialized())
          throw Error(ErrorCode::InvalidArgument, "camera is already paired; reset it first");
        pairing::FileVisualLink visual(pair_end.show, pair_end.scan);
        auto session = pairing::Session::camera({ &device.factory_keys(), std::nullopt }, visual);
        pair_end.run(*session);
        device.install(session->take_camera_outcome());
        auto bytes = device.serialize();
        cli::write_private(path, bytes);
        secure_zero(bytes.data(), bytes.size());
        std::cout << "paired; camera id " << to_hex(framecrypto::camera_id_of(device.camera_keys().public_bundle().ed25519))
                  << "\n";
      } else {
        params.t0_ms = t0.empty() ? admin::system_clock_ms() : cli::parse_time(t0);
        params.validate();
        pairing::FileVisualLink visual(pair_end.show, pair_end.scan);
        auto session = pairing::Session::owner({ std::nullopt, wifi, params, std::nullopt }, visual);
        pair_end.run(*session);
        auto outcome = session->take_owner_outcome();
        auto owner = admin::OwnerDevice::from_pairing(outcome);
        save_owner(path, owner);
        std::cout << "paired; camera id " << to_hex(framecrypto::camera_id_of(owner.camera_public().ed25519)) << "\n";
        std::cout << "escrow passphrase: " << outcome.passphrase.display() << "\n";
      }
      return 0;
    }

    if (*delegate) {
      if (delegate_role == "owner") {
        if (!delegate_range.given())
          throw Error(ErrorCode::InvalidArgument, "the owner side needs --from and --to");
        auto owner = load_owner(cli::state_path(state));
        auto range = delegate_range.epochs(owner.tree().params());
        auto cover = owner.grant(range);
        if (cover.empty())
          throw Error(ErrorCode::KeyUnavailable, "owner holds no keys for " + describe(range, owner.tree().params()));
        pairing::FileVisualLink visual(delegate_end.show, delegate_end.scan);
        auto session = pairing::Session::delegator({ &owner.keys(), owner.tree().params(), cover, owner.camera_public() }, visual);
        delegate_end.run(*session);
        std::cout << "delegated " << describe(range, owner.tree().params()) << " in " << cover.size() << " node(s)\n";
      } else {
        if (grant_out.empty())
          throw Error(ErrorCode::InvalidArgument, "the delegatee side needs --out");
        pairing::FileVisualLink visual(delegate_end.show, delegate_end.scan);
        auto session = pairing::Session::delegatee({}, visual);
        delegate_end.run(*session);
        const auto& outcome = session->delegatee_outcome();
        if (!outcome.camera_public)
          throw Error(ErrorCode::Malformed, "delegation carried no camera key");
        admin::Grant g{ *outcome.camera_public, outcome.grant };
        auto bytes = g.serialize();
        cli::write_private(grant_out, bytes);
        secure_zero(bytes.data(), bytes.size());
        std::cout << "grant saved to " << grant_out << "\n";
      }
      return 0;
    }

    if (*grant) {
      auto owner = load_owner(cli::state_path(state));
      const auto& p = owner.tree().params();
      admin::Grant g{ owner.camera_public(), owner.tree() };
      if (grant_range.given())
        g.tree = keytree::KeyTree::from_nodes(p, owner.grant(grant_range.epochs(p)));
      auto bytes = g.serialize();
      cli::write_private(grant_out, bytes);
      secure_zero(bytes.data(), bytes.size());
      std::cout << "grant saved to " << grant_out << "\n";
      return 0;
    }

    if (*del) {
      auto path = cli::state_path(state);
      auto owner = load_owner(path);
      auto range = delete_range.epochs(owner.tree().params());
      auto request = owner.delete_videos(range, admin::system_clock_ms());
      send_request(camera_socket, request);
      save_owner(path, owner);
      std::cout << "deleted " << describe(range, owner.tree().params()) << "\n";
      return 0;
    }

    if (*reset) {
      auto path = cli::state_path(state);
      auto owner = load_owner(path);
      auto request = owner.factory_reset(admin::system_clock_ms());
      send_request(camera_socket, request);
      save_owner(path, owner);
      std::cout << "camera reset\n";
      return 0;
    }

    if (*recover) {
      auto path = cli::state_path(state);
      auto phrase = escrow::Passphrase::parse(passphrase);
      Link link{ channel::connect_unix(camera_socket, 5000) };
      channel::FdChannel ch(link.fd);
      auto owner = admin::recover_over(ch, phrase);
      save_owner(path, owner);
      std::cout << "recovered owner state for camera "
                << to_hex(framecrypto::camera_id_of(owner.camera_public().ed25519)) << "\n";
      return 0;
    }

    if (*show) {
      Link link{ channel::connect_unix(camera_socket, 5000) };
      channel::FdChannel ch(link.fd);
      auto material = admin::fetch_escrow(ch);
      auto pk = material.camera_public();
      std::cout << "camera id:   " << to_hex(framecrypto::camera_id_of(pk.ed25519)) << "\n";
      std::cout << "fingerprint: " << to_hex(pk.fingerprint()) << "\n";
      std::cout << "ed25519:     " << to_hex(pk.ed25519) << "\n";
      std::cout << "x25519:      " << to_hex(pk.x25519) << "\n";
      std::cout << "rsa spki:    " << to_hex(pk.rsa_spki) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    return cli::report(e);
  }
  return 0;
}

#include <charconv>
#include <thread>

#define CPPHTTPLIB_TCP_NODELAY true
#include <httplib.h>

#include "cactus/error.hpp"
#include "cactus/storage.hpp"

namespace cactus::storage {

namespace {

std::optional<uint64_t> parse_u64(std::string_view s)
{
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

std::optional<ByteArray<32>> parse_camera_id(const std::string& hex)
{
  if (hex.size() != 64)
    return std::nullopt;
  try {
    auto raw = from_hex(hex);
    ByteArray<32> id{};
    std::copy(raw.begin(), raw.end(), id.begin());
    return id;
  } catch (const Error&) {
    return std::nullopt;
  }
}

} // namespace

struct HttpStore::Impl
{
  std::mutex mutex;
  httplib::Client client;

  explicit Impl(const std::string& url)
    : client(url)
  {
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    client.set_keep_alive(true);
  }
};

HttpStore::HttpStore(std::string base_url)
  : impl_(std::make_unique<Impl>(base_url))
{
  if (!impl_->client.is_valid())
    throw Error(ErrorCode::InvalidArgument, "bad storage url " + base_url);
}

HttpStore::~HttpStore() = default;

void HttpStore::put(const BlobKey& key, ByteView data)
{
  auto path = "/v1/" + to_hex(key.camera_id) + "/" + std::to_string(key.first_epoch) + "/" + std::to_string(key.sequence);
  std::lock_guard lock(impl_->mutex);
  auto res = impl_->client.Put(path, reinterpret_cast<const char*>(data.data()), data.size(), "application/octet-stream");
  if (!res)
    throw Error(ErrorCode::Io, "storage unreachable: " + httplib::to_string(res.error()));
  if (res->status == 409)
    throw Error(ErrorCode::Conflict, "blob key already stored");
  if (res->status != 201 && res->status != 200)
    throw Error(ErrorCode::Io, "storage answered " + std::to_string(res->status));
}

std::vector<Blob> HttpStore::get_range(const ByteArray<32>& camera_id, uint64_t from, uint64_t to)
{
  return get_since(camera_id, from, to, 0);
}

std::vector<Blob> HttpStore::get_since(const ByteArray<32>& camera_id, uint64_t from, uint64_t to, uint64_t since)
{
  auto path = "/v1/" + to_hex(camera_id) + "?from=" + std::to_string(from) + "&to=" + std::to_string(to);
  if (since)
    path += "&since=" + std::to_string(since);
  std::lock_guard lock(impl_->mutex);
  auto res = impl_->client.Get(path);
  if (!res)
    throw Error(ErrorCode::Io, "storage unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(ErrorCode::Io, "storage answered " + std::to_string(res->status));
  return decode_listing(camera_id, as_view(res->body));
}

struct Server::Impl
{
  std::shared_ptr<BlobStore> store;
  httplib::Server http;
  std::thread thread;
};

Server::Server(std::shared_ptr<BlobStore> store)
  : impl_(std::make_unique<Impl>())
{
  impl_->store = std::move(store);
  auto* self = impl_.get();

  self->http.Put(R"(/v1/([0-9a-fA-F]+)/(\d+)/(\d+))", [self](const httplib::Request& req, httplib::Response& res) {
    auto id = parse_camera_id(req.matches[1]);
    auto epoch = parse_u64(req.matches[2].str());
    auto seq = parse_u64(req.matches[3].str());
    if (!id || !epoch || !seq) {
      res.status = 400;
      return;
    }
    try {
      self->store->put({ *id, *epoch, *seq }, as_view(req.body));
      res.status = 201;
    } catch (const Error& e) {
      res.status = e.code() == ErrorCode::Conflict ? 409 : 500;
      res.set_content(e.what(), "text/plain");
    }
  });

  self->http.Get(R"(/v1/([0-9a-fA-F]+))", [self](const httplib::Request& req, httplib::Response& res) {
    auto id = parse_camera_id(req.matches[1]);
    auto from = parse_u64(req.get_param_value("from"));
    auto to = parse_u64(req.get_param_value("to"));
    auto since = req.has_param("since") ? parse_u64(req.get_param_value("since")) : std::optional<uint64_t>(0);
    if (!id || !from || !to || !since) {
      res.status = 400;
      return;
    }
    try {
      auto blobs = *since ? self->store->get_since(*id, *from, *to, *since) : self->store->get_range(*id, *from, *to);
      auto body = encode_listing(blobs);
      res.set_content(std::string(body.begin(), body.end()), "application/octet-stream");
    } catch (const Error& e) {
      res.status = 500;
      res.set_content(e.what(), "text/plain");
    }
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port)
{
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0)
    throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void Server::start()
{
  if (impl_->thread.joinable())
    return;
  impl_->thread = std::thread([self = impl_.get()] { self->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void Server::stop()
{
  if (!impl_->thread.joinable())
    return;
  impl_->http.stop();
  impl_->thread.join();
}

} // namespace cactus::storage

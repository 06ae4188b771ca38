#include "common.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include "cactus/error.hpp"

namespace cactus::cli {

namespace {

[[noreturn]] void bad_time(const std::string& text)
{
  throw Error(ErrorCode::InvalidArgument, "bad timestamp '" + text + "': want RFC 3339 or @<unix ms>");
}

} // namespace

uint64_t parse_time(const std::string& text)
{
  if (!text.empty() && text[0] == '@') {
    char* end = nullptr;
    errno = 0;
    unsigned long long ms = std::strtoull(text.c_str() + 1, &end, 10);
    if (text.size() == 1 || *end != '\0' || errno != 0)
      bad_time(text);
    return ms;
  }

  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0, used = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%n", &year, &month, &day, &hour, &minute, &second, &used) != 6)
    bad_time(text);
  std::string rest = text.substr(static_cast<size_t>(used));

  int64_t frac_ms = 0;
  if (!rest.empty() && rest[0] == '.') {
    size_t i = 1;
    int64_t scale = 100;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) {
      frac_ms += (rest[i] - '0') * scale;
      scale /= 10;
      ++i;
    }
    if (i == 1)
      bad_time(text);
    rest = rest.substr(i);
  }

  int64_t offset_min = 0;
  if (rest == "Z" || rest == "z") {
  } else if (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && rest[3] == ':') {
    int oh = 0, om = 0;
    if (std::sscanf(rest.c_str() + 1, "%2d:%2d", &oh, &om) != 2 || oh > 23 || om > 59)
      bad_time(text);
    offset_min = (rest[0] == '+' ? 1 : -1) * (oh * 60 + om);
  } else {
    bad_time(text);
  }

  using namespace std::chrono;
  year_month_day ymd{ std::chrono::year(year), std::chrono::month(static_cast<unsigned>(month)), std::chrono::day(static_cast<unsigned>(day)) };
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
    bad_time(text);
  auto tp = sys_days(ymd) + hours(hour) + minutes(minute) + seconds(second) + milliseconds(frac_ms) - minutes(offset_min);
  auto ms = duration_cast<milliseconds>(tp.time_since_epoch()).count();
  if (ms < 0)
    bad_time(text);
  return static_cast<uint64_t>(ms);
}

std::string format_time(uint64_t ms)
{
  using namespace std::chrono;
  sys_time<milliseconds> tp{ milliseconds(ms) };
  auto day = floor<days>(tp);
  year_month_day ymd{ day };
  hh_mm_ss hms{ tp - day };
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()),
                static_cast<long>(hms.subseconds().count()));
  return buf;
}

keytree::EpochRange epochs_between(uint64_t from_ms, uint64_t to_ms, const keytree::TreeParams& params)
{
  if (to_ms <= from_ms)
    throw Error(ErrorCode::InvalidArgument, "empty time range");
  uint64_t span = uint64_t{ params.epoch_seconds } * 1000;
  uint64_t end_of_tree = params.t0_ms + params.leaf_count() * span;
  if (to_ms <= params.t0_ms || from_ms >= end_of_tree)
    throw Error(ErrorCode::InvalidArgument, "time range lies outside the key tree's lifespan");
  uint64_t from = std::max(from_ms, params.t0_ms);
  uint64_t to = std::min(to_ms, end_of_tree);
  return { (from - params.t0_ms) / span, (to - 1 - params.t0_ms) / span + 1 };
}

Bytes read_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::Io, "cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_private(const std::string& path, ByteView data)
{
  std::string tmp = path + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0)
    throw Error(ErrorCode::Io, "cannot write " + tmp);
  ::fchmod(fd, 0600);
  size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR)
        continue;
      ::close(fd);
      throw Error(ErrorCode::Io, "cannot write " + tmp);
    }
    done += static_cast<size_t>(n);
  }
  bool ok = ::fsync(fd) == 0;
  ok = ::close(fd) == 0 && ok;
  if (!ok || ::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(ErrorCode::Io, "cannot replace " + path);
}

std::string state_path(const std::string& explicit_path)
{
  if (!explicit_path.empty())
    return explicit_path;
  if (const char* env = std::getenv("CACTUS_STATE"); env && *env)
    return env;
  throw Error(ErrorCode::InvalidArgument, "no state file: pass --state or set CACTUS_STATE");
}

int report(const std::exception& e)
{
  std::cerr << "error: " << e.what() << "\n";
  return 1;
}

} // namespace cactus::cli

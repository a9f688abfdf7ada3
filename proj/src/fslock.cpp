#include "shardline/fslock.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <vector>

#include "shardline/errors.hpp"

namespace shardline {
namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw StorageError(what + ": " + std::strerror(errno));
}

int open_retry(const char* path, int flags, mode_t mode = 0644) {
  for (;;) {
    int fd = ::open(path, flags, mode);
    if (fd >= 0) return fd;
    if (errno != EINTR) return -1;
  }
}

void flock_retry(int fd, int op) {
  for (;;) {
    if (::flock(fd, op) == 0) return;
    if (errno != EINTR) throw_errno("flock");
  }
}

}  // namespace

FileLock::FileLock(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  fd_ = open_retry(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC);
  if (fd_ < 0) throw_errno("open lock file " + path.string());
}

FileLock::~FileLock() {
  if (fd_ >= 0) ::close(fd_);  // releases any held flock
}

void FileLock::lock_exclusive() { flock_retry(fd_, LOCK_EX); }

void FileLock::lock_shared() { flock_retry(fd_, LOCK_SH); }

bool FileLock::try_lock_exclusive() {
  for (;;) {
    if (::flock(fd_, LOCK_EX | LOCK_NB) == 0) return true;
    if (errno == EWOULDBLOCK || errno == EAGAIN) return false;
    if (errno != EINTR) throw_errno("flock");
  }
}

void FileLock::unlock() { flock_retry(fd_, LOCK_UN); }

AppendLog::AppendLog(const std::filesystem::path& path) : path_(path) {
  std::filesystem::create_directories(path.parent_path());
  write_fd_ = open_retry(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC);
  if (write_fd_ < 0) throw_errno("open log for append " + path.string());
  read_fd_ = open_retry(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (read_fd_ < 0) throw_errno("open log for read " + path.string());
}

AppendLog::~AppendLog() {
  if (write_fd_ >= 0) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
}

std::uint64_t AppendLog::size() const {
  struct stat st{};
  if (::fstat(read_fd_, &st) != 0) throw_errno("fstat " + path_.string());
  return static_cast<std::uint64_t>(st.st_size);
}

void AppendLog::append_line(const std::string& line, bool sync_after) {
  // Heal a torn tail left by a writer killed mid-append.
  std::uint64_t end = size();
  if (end > 0) {
    char last = 0;
    if (::pread(read_fd_, &last, 1, static_cast<off_t>(end - 1)) == 1 &&
        last != '\n') {
      const char nl = '\n';
      if (::write(write_fd_, &nl, 1) != 1) throw_errno("heal " + path_.string());
    }
  }
  std::string buf = line;
  buf.push_back('\n');
  const char* p = buf.data();
  size_t left = buf.size();
  while (left > 0) {
    ssize_t n = ::write(write_fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("append " + path_.string());
    }
    p += n;
    left -= static_cast<size_t>(n);
  }
  if (sync_after) sync();
}

void AppendLog::sync() {
  if (::fdatasync(write_fd_) != 0) throw_errno("fdatasync " + path_.string());
}

void AppendLog::read_new_lines(
    std::uint64_t* offset,
    const std::function<void(const std::string&)>& on_line) {
  std::uint64_t end = size();
  if (*offset >= end) return;
  std::string pending;
  std::uint64_t pos = *offset;
  std::vector<char> buf(64 * 1024);
  while (pos < end) {
    size_t want = static_cast<size_t>(
        std::min<std::uint64_t>(buf.size(), end - pos));
    ssize_t n = ::pread(read_fd_, buf.data(), want, static_cast<off_t>(pos));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("pread " + path_.string());
    }
    if (n == 0) break;  // truncated under us; stop at what we saw
    for (ssize_t i = 0; i < n; ++i) {
      char c = buf[static_cast<size_t>(i)];
      if (c == '\n') {
        on_line(pending);
        pending.clear();
        *offset = pos + static_cast<std::uint64_t>(i) + 1;
      } else {
        pending.push_back(c);
      }
    }
    pos += static_cast<std::uint64_t>(n);
  }
  // Anything after the last newline stays unconsumed until completed.
}

void AppendLog::truncate() {
  if (::ftruncate(write_fd_, 0) != 0) throw_errno("truncate " + path_.string());
}

}  // namespace shardline

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

namespace shardline {

// flock-based advisory lock shared between processes. In-process callers must
// serialize access themselves (flock calls on one descriptor do not exclude
// threads of the same process).
class FileLock {
public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

  void lock_exclusive();
  void lock_shared();
  // Non-blocking; returns false when another process holds the lock.
  bool try_lock_exclusive();
  void unlock();

  class Guard {
  public:
    Guard(FileLock& l, bool exclusive) : lock_(&l) {
      exclusive ? l.lock_exclusive() : l.lock_shared();
    }
    ~Guard() {
      if (lock_) lock_->unlock();
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

  private:
    FileLock* lock_;
  };

private:
  int fd_ = -1;
};

// Append-only line log shared between processes. Appends are serialized by
// the caller holding an exclusive FileLock over the file. If a previous
// writer died mid-append, the torn tail is healed with a newline before the
// next record goes in, so one bad line never corrupts its successors.
class AppendLog {
public:
  explicit AppendLog(const std::filesystem::path& path);
  ~AppendLog();
  AppendLog(const AppendLog&) = delete;
  AppendLog& operator=(const AppendLog&) = delete;

  // Caller must hold the exclusive lock. With sync (the default) the record
  // is flushed to disk before returning, so it survives a process kill; bulk
  // writers may pass sync=false and call sync() once at the end.
  void append_line(const std::string& line, bool sync = true);
  void sync();

  // Reads complete lines starting at *offset, advancing it past each one.
  // A trailing line without '\n' is left for the next call.
  void read_new_lines(std::uint64_t* offset,
                      const std::function<void(const std::string&)>& on_line);

  std::uint64_t size() const;
  const std::filesystem::path& path() const { return path_; }

  // Truncates to empty. Caller must hold the exclusive lock and know that no
  // other instance is reading (compaction-time only).
  void truncate();

private:
  std::filesystem::path path_;
  int write_fd_ = -1;
  int read_fd_ = -1;
};

}  // namespace shardline

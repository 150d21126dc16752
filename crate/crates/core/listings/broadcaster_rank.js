jdata {
  	double pe as broadcaster;
}
jcond {
  	pickpe: pe < sys.rank;
 	 // evaluated using the latest broadcaster value
}
jasync {pickpe} function fname() {
  	double y = pe; // assigns the latest broadcaster value
}
